//! Logistic regression with fractional responses, fitted by Newton–Raphson.

use nalgebra::{DMatrix, DVector};

use crate::data::{logistic, Matrix};
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
const DIVERGENCE_NORM: f64 = 1e3;
const SEPARATION_ETA: f64 = 25.0;

#[derive(Debug, Clone)]
pub struct LogisticFit {
    /// `(intercept, coefficients...)`.
    pub coef: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
}

/// `Σ y log p + (1 - y) log(1 - p)` with `p = logistic(α + xᵀb)`.
pub fn logistic_loglik(x: &Matrix, y: &[f64], coef: &[f64]) -> f64 {
    (0..x.rows())
        .map(|i| {
            let eta = linear_predictor(x.row(i), coef);
            // log p = -log(1+e^-eta), log(1-p) = -log(1+e^eta)
            -y[i] * softplus(-eta) - (1.0 - y[i]) * softplus(eta)
        })
        .sum()
}

#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub fn linear_predictor(row: &[f64], coef: &[f64]) -> f64 {
    coef[0] + row.iter().zip(&coef[1..]).map(|(a, b)| a * b).sum::<f64>()
}

/// Maximizes the Bernoulli log-likelihood of responses `y ∈ [0,1]` on `x`
/// with an intercept. Fails when the coefficients diverge (separation).
pub fn fit_logistic(x: &Matrix, y: &[f64], init: Option<&[f64]>) -> Result<LogisticFit> {
    let (n, d) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::DimensionMismatch("responses do not match design rows".into()));
    }
    let p = d + 1;
    let mut coef = match init {
        Some(c) if c.len() == p => DVector::from_column_slice(c),
        _ => DVector::zeros(p),
    };
    let mut ll = logistic_loglik(x, y, coef.as_slice());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        let mut grad = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        let mut xi = DVector::<f64>::zeros(p);
        for i in 0..n {
            xi[0] = 1.0;
            for (j, v) in x.row(i).iter().enumerate() {
                xi[j + 1] = *v;
            }
            let mu = logistic(linear_predictor(x.row(i), coef.as_slice()));
            grad.axpy(y[i] - mu, &xi, 1.0);
            info.ger(mu * (1.0 - mu), &xi, &xi, 1.0);
        }
        if grad.amax() <= GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let step = match info.clone().cholesky().map(|c| c.solve(&grad)).or_else(|| info.lu().solve(&grad)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => return Err(Error::LogisticDivergence),
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = &coef + &step * t;
            let cll = logistic_loglik(x, y, cand.as_slice());
            // Near the optimum the gain drops below rounding error in the log-likelihood.
            if cll.is_finite() && cll >= ll - 1e-12 * (1.0 + ll.abs()) {
                coef = cand;
                ll = cll;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if coef.norm() > DIVERGENCE_NORM {
            return Err(Error::LogisticDivergence);
        }
        if !moved {
            converged = true;
            break;
        }
    }
    // Separated data drive the linear predictor off to infinity.
    let max_eta = (0..n).map(|i| linear_predictor(x.row(i), coef.as_slice()).abs()).fold(0.0, f64::max);
    if !converged || max_eta > SEPARATION_ETA {
        return Err(Error::LogisticDivergence);
    }
    Ok(LogisticFit { coef: coef.as_slice().to_vec(), loglik: ll, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_known_solution_on_grouped_data() {
        // Two groups with empirical rates 0.25 and 0.75: MLE is logit of each rate.
        let x = Matrix::new(8, 1, vec![0., 0., 0., 0., 1., 1., 1., 1.]).unwrap();
        let y = [1., 0., 0., 0., 1., 1., 1., 0.];
        let fit = fit_logistic(&x, &y, None).unwrap();
        let logit = |p: f64| (p / (1.0 - p)).ln();
        assert!((fit.coef[0] - logit(0.25)).abs() < 1e-8);
        assert!((fit.coef[0] + fit.coef[1] - logit(0.75)).abs() < 1e-8);
    }

    #[test]
    fn fractional_responses() {
        let x = Matrix::new(2, 1, vec![0., 1.]).unwrap();
        let fit = fit_logistic(&x, &[0.2, 0.9], None).unwrap();
        assert!((logistic(fit.coef[0]) - 0.2).abs() < 1e-8);
        assert!((logistic(fit.coef[0] + fit.coef[1]) - 0.9).abs() < 1e-8);
    }

    #[test]
    fn separation_detected() {
        let x = Matrix::new(4, 1, vec![0., 1., 2., 3.]).unwrap();
        assert!(matches!(fit_logistic(&x, &[0., 0., 1., 1.], None), Err(Error::LogisticDivergence)));
    }
}
