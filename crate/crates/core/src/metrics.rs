//! Evaluation metrics for fitted models.

use crate::data::{dot, norm2, ModelParams, SurvivalDataset};
use crate::error::{Error, Result};
use crate::link_em::estep_weights;
use crate::simgen::{link_value, LinkId};

/// True incidence of a simulation design.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueIncidence {
    pub link: LinkId,
    pub intercept: f64,
    pub gamma0: Vec<f64>,
}

impl TrueIncidence {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        link_value(self.link, self.intercept, dot(&self.gamma0, x))
    }
}

/// Covariate grid of the simulation designs: x1 on [0,1] and x2 on [-3,3]
/// in steps of 0.01, x3 and x4 binary.
pub fn design_grid() -> impl Iterator<Item = [f64; 4]> {
    (0..=100).flat_map(|i| {
        (0..=600).flat_map(move |j| {
            (0..4).map(move |b| [i as f64 / 100.0, -3.0 + j as f64 / 100.0, (b & 1) as f64, (b >> 1) as f64])
        })
    })
}

/// Mean squared difference of fitted and true incidence over [`design_grid`].
pub fn mse_cure_grid(fitted: &ModelParams, truth: &TrueIncidence) -> Result<f64> {
    mse_on_grid(&|x: &[f64]| fitted.incidence(x), fitted.gamma.as_slice().len(), truth)
}

pub(crate) fn mse_on_grid(p_hat: &dyn Fn(&[f64]) -> f64, d: usize, truth: &TrueIncidence) -> Result<f64> {
    if d != 4 || truth.gamma0.len() != 4 {
        return Err(Error::DimensionMismatch("grid MSE needs 4 incidence covariates".into()));
    }
    let (mut sum, mut k) = (0.0, 0usize);
    for x in design_grid() {
        let e = p_hat(&x) - truth.evaluate(&x);
        sum += e * e;
        k += 1;
    }
    Ok(sum / k as f64)
}

/// `(mean ‖θ̂ - θ₀‖, sample variance of ‖θ̂‖)`.
pub fn coef_bias_variance(estimates: &[Vec<f64>], truth: &[f64]) -> Result<(f64, f64)> {
    if estimates.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 estimates".into()));
    }
    if estimates.iter().any(|e| e.len() != truth.len()) {
        return Err(Error::DimensionMismatch("estimate length differs from truth".into()));
    }
    let r = estimates.len() as f64;
    let bias = estimates
        .iter()
        .map(|e| norm2(&e.iter().zip(truth).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .sum::<f64>()
        / r;
    let norms: Vec<f64> = estimates.iter().map(|e| norm2(e)).collect();
    Ok((bias, sample_variance(&norms)))
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Which log-loss pairing to use in [`prediction_error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeOrientation {
    /// `-Σ ŵ log(1-p̂) + (1-ŵ) log p̂`.
    #[default]
    AsPrinted,
    /// `-Σ ŵ log p̂ + (1-ŵ) log(1-p̂)`.
    Swapped,
}

/// Prediction error of `fitted` on `test`, with E-step weights computed at
/// the fitted parameters.
pub fn prediction_error(fitted: &ModelParams, test: &SurvivalDataset) -> Result<f64> {
    prediction_error_with(fitted, test, PeOrientation::AsPrinted)
}

pub fn prediction_error_with(fitted: &ModelParams, test: &SurvivalDataset, orientation: PeOrientation) -> Result<f64> {
    if test.d() != fitted.gamma.as_slice().len() || test.q() != fitted.latency.beta.len() {
        return Err(Error::DimensionMismatch("test covariates do not match the model".into()));
    }
    let p: Vec<f64> = (0..test.n()).map(|i| fitted.incidence(test.x.row(i))).collect();
    let w = estep_weights(test, &p, &fitted.latency, fitted.largest_event_time());
    pe_from(&w, &p, orientation)
}

pub(crate) fn pe_from(w: &[f64], p: &[f64], orientation: PeOrientation) -> Result<f64> {
    if w.len() != p.len() {
        return Err(Error::DimensionMismatch("weights and probabilities differ in length".into()));
    }
    let mut s = 0.0;
    for (&w, &p) in w.iter().zip(p) {
        assert!(p > 0.0 && p < 1.0, "incidence {p} outside (0,1)");
        s += match orientation {
            PeOrientation::AsPrinted => w * (1.0 - p).ln() + (1.0 - w) * p.ln(),
            PeOrientation::Swapped => w * p.ln() + (1.0 - w) * (1.0 - p).ln(),
        };
    }
    Ok(-s)
}

/// `(1/n) Σ ŵ(1-p̂)² + (1-ŵ)p̂²`.
pub fn epecp(weights: &[f64], p_hat: &[f64]) -> Result<f64> {
    if weights.len() != p_hat.len() {
        return Err(Error::DimensionMismatch("weights and probabilities differ in length".into()));
    }
    if weights.is_empty() {
        return Err(Error::EmptyProblem);
    }
    let s: f64 = weights
        .iter()
        .zip(p_hat)
        .map(|(&w, &p)| w * (1.0 - p) * (1.0 - p) + (1.0 - w) * p * p)
        .sum();
    Ok(s / weights.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{IncidenceLink, IndexCoefficients, LatencyParams, Matrix, MonotoneStepLink};
    use crate::simgen::ExperimentSpec;
    use proptest::prelude::*;

    fn truth_a() -> TrueIncidence {
        let s = ExperimentSpec::preset("exptA").unwrap();
        TrueIncidence { link: s.link, intercept: s.intercept, gamma0: s.gamma0 }
    }

    fn constant_model(p: f64) -> ModelParams {
        let link = MonotoneStepLink::new(vec![0.0], vec![p], 1e-6, 1.0 - 1e-6).unwrap();
        ModelParams {
            gamma: IndexCoefficients::normalized(&[1.0, 0.0, 0.0, 0.0]).unwrap(),
            latency: LatencyParams::new(vec![0.0, 0.0], vec![(1.0, 0.5), (2.0, 1.0)]).unwrap(),
            link: IncidenceLink::Step(link),
            loglik: 0.0,
            iterations: 1,
            converged: true,
            gamma_raw: None,
        }
    }

    #[test]
    fn grid_size() {
        assert_eq!(design_grid().count(), 242_804);
    }

    #[test]
    fn oracle_plug_in_has_zero_mse() {
        let t = truth_a();
        assert_eq!(mse_on_grid(&|x: &[f64]| t.evaluate(x), 4, &t).unwrap(), 0.0);
    }

    #[test]
    fn constant_at_mean_gives_variance() {
        let t = truth_a();
        let vals: Vec<f64> = design_grid().map(|x| t.evaluate(&x)).collect();
        let m = mean(&vals);
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
        let mse = mse_cure_grid(&constant_model(m), &t).unwrap();
        assert!((mse - var).abs() < 1e-12);
    }

    #[test]
    fn wrong_dimension_rejected() {
        let t = TrueIncidence { gamma0: vec![1.0], ..truth_a() };
        assert!(mse_cure_grid(&constant_model(0.5), &t).is_err());
    }

    #[test]
    fn bias_variance_examples() {
        let t = vec![0.6, 0.8];
        assert_eq!(coef_bias_variance(&[t.clone(), t.clone()], &t).unwrap(), (0.0, 0.0));
        let (b, v) = coef_bias_variance(&[vec![1.6, 0.8], vec![-0.4, 0.8]], &t).unwrap();
        assert!((b - 1.0).abs() < 1e-15);
        let (n1, n2) = ((1.6f64 * 1.6 + 0.64).sqrt(), (0.16f64 + 0.64).sqrt());
        assert!((v - (n1 - n2) * (n1 - n2) / 2.0).abs() < 1e-15);
        assert!(coef_bias_variance(&[], &t).is_err());
    }

    #[test]
    fn epecp_examples() {
        assert_eq!(epecp(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(epecp(&[1.0], &[0.0]).unwrap(), 1.0);
        assert!((epecp(&[1.0, 0.0], &[0.8, 0.3]).unwrap() - 0.065).abs() < 1e-15);
        assert!(epecp(&[1.0], &[0.1, 0.2]).is_err());
    }

    fn test_set() -> SurvivalDataset {
        let x: Vec<f64> = (0..12).map(|i| (i % 5) as f64 * 0.1).collect();
        SurvivalDataset::new(
            vec![0.5, 1.5, 3.0],
            vec![1, 0, 0],
            Matrix::new(3, 4, x).unwrap(),
            Matrix::new(3, 2, vec![0.0; 6]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn pe_half_is_n_log2() {
        let pe = prediction_error(&constant_model(0.5), &test_set()).unwrap();
        assert!((pe - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pe_separation_surrogate() {
        let eps = 1e-6;
        let w = [1.0, 0.0, 1.0, 0.0];
        let p: Vec<f64> = w.iter().map(|&w| if w == 1.0 { eps } else { 1.0 - eps }).collect();
        let pe = pe_from(&w, &p, PeOrientation::AsPrinted).unwrap();
        assert!(pe < 4.0 * 2.0 * eps);
    }

    proptest! {
        #[test]
        fn pe_minimized_at_one_minus_mean_weight(w in prop::collection::vec(0.0f64..=1.0, 1..20)) {
            let target = 1.0 - mean(&w);
            let pe = |c: f64| pe_from(&w, &vec![c; w.len()], PeOrientation::AsPrinted).unwrap();
            let best = (1..1000).map(|i| i as f64 / 1000.0).min_by(|a, b| pe(*a).total_cmp(&pe(*b))).unwrap();
            prop_assert!((best - target.clamp(0.001, 0.999)).abs() <= 1.5e-3);
        }

        #[test]
        fn pe_permutation_invariant(seed in 0u64..1000) {
            let w: Vec<f64> = (0..8).map(|i| ((seed + i * 7) % 11) as f64 / 10.0).collect();
            let p: Vec<f64> = (0..8).map(|i| 0.05 + ((seed * 3 + i) % 9) as f64 / 10.0).collect();
            let mut idx: Vec<usize> = (0..8).collect();
            idx.rotate_left((seed % 8) as usize);
            idx.swap(0, 5);
            let w2: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
            let p2: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let a = pe_from(&w, &p, PeOrientation::AsPrinted).unwrap();
            let b = pe_from(&w2, &p2, PeOrientation::AsPrinted).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn mse_nonnegative(p in 0.01f64..0.99) {
            prop_assert!(mse_cure_grid(&constant_model(p), &truth_a()).unwrap() >= 0.0);
        }
    }
}
