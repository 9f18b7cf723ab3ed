//! Simulation designs: four-covariate mixture cure data with a single-index
//! incidence, Cox–Weibull latency and exponential censoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{dot, logistic, norm2, Matrix, SurvivalDataset};
use crate::error::{Error, Result};

/// True incidence link of a simulation design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkId {
    A,
    B,
    C,
    D,
}

impl std::str::FromStr for LinkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(LinkId::A),
            "B" => Ok(LinkId::B),
            "C" => Ok(LinkId::C),
            "D" => Ok(LinkId::D),
            other => Err(Error::InvalidArgument(format!("unknown link id {other:?}"))),
        }
    }
}

impl std::fmt::Display for LinkId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LinkId::A => "A",
            LinkId::B => "B",
            LinkId::C => "C",
            LinkId::D => "D",
        };
        f.write_str(s)
    }
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Evaluates a design link at index `u` with intercept `c`.
pub fn link_value(link: LinkId, c: f64, u: f64) -> f64 {
    match link {
        LinkId::A => logistic(c + u),
        LinkId::B => {
            let s = c + u;
            logistic(0.75 * normal_cdf(s + 0.5) + 0.25 * normal_cdf(0.5 * s * s * s))
        }
        LinkId::C => (1.0 + (c + u * u * u).tanh()) / 2.0,
        LinkId::D => {
            let x = u - c;
            logistic(0.5 * x * x * x - 0.1 * x * x - 0.8 * x + 1.0)
        }
    }
}

/// Parameters of one simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub link: LinkId,
    pub intercept: f64,
    pub gamma0: Vec<f64>,
    pub beta0: Vec<f64>,
    /// Baseline survival of the uncured is `exp(-λ t^k)`.
    #[serde(default = "default_lambda")]
    pub weibull_lambda: f64,
    #[serde(default = "default_shape")]
    pub weibull_shape: f64,
    pub censor_rate: f64,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_lambda() -> f64 {
    1.5
}

fn default_shape() -> f64 {
    2.2
}

impl ExperimentSpec {
    /// Preset designs `exptA`..`exptD` with their first censoring rate.
    /// `gamma0` is the tabulated 4-digit vector rescaled to unit norm.
    pub fn preset(name: &str) -> Result<Self> {
        let key = name.trim().trim_start_matches("expt").trim_start_matches("exp");
        let link: LinkId = key.parse()?;
        let (c, g, b, rate) = match link {
            LinkId::A => (1.2, [-0.2383, 0.7423, 0.3156, 0.5409], [-0.8, 0.5], 0.1),
            LinkId::B => (0.5, [-0.7826, 0.4368, -0.2599, 0.3594], [-0.6, 0.8], 0.1),
            LinkId::C => (0.2, [0.1057, 0.7899, -0.4883, 0.3556], [0.6, 0.4], 0.15),
            LinkId::D => (-0.5, [0.6718, 0.2896, -0.1547, 0.6640], [-0.4, -0.6], 0.1),
        };
        let norm = norm2(&g);
        Ok(Self {
            link,
            intercept: c,
            gamma0: g.iter().map(|v| v / norm).collect(),
            beta0: b.to_vec(),
            weibull_lambda: default_lambda(),
            weibull_shape: default_shape(),
            censor_rate: rate,
            n: 250,
            seed: 0,
        })
    }

    /// The two censoring rates tabulated for each design.
    pub fn preset_censor_rates(link: LinkId) -> [f64; 2] {
        match link {
            LinkId::A => [0.1, 0.3],
            LinkId::B => [0.1, 0.4],
            LinkId::C => [0.15, 0.5],
            LinkId::D => [0.1, 0.25],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma0.len() != 4 || self.beta0.len() != 2 {
            return Err(Error::InvalidArgument("designs use 4 incidence and 2 latency covariates".into()));
        }
        if (norm2(&self.gamma0) - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument("gamma0 must have unit norm".into()));
        }
        if !(self.weibull_lambda > 0.0 && self.weibull_shape > 0.0 && self.censor_rate > 0.0) {
            return Err(Error::InvalidArgument("Weibull parameters and censoring rate must be positive".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        Ok(())
    }

    /// Incidence covariates in the design: `(U[0,1], N(0,1), Bern(0.3), Bern(0.6))`;
    /// latency covariates are `(x1, x4)`.
    pub fn latency_covariates(x: &[f64]) -> [f64; 2] {
        [x[0], x[3]]
    }
}

/// Simulated dataset with its latent truth.
#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: SurvivalDataset,
    /// Latent uncure status (1 = susceptible).
    pub uncured: Vec<u8>,
    /// Event times; `f64::INFINITY` for cured rows.
    pub event_time: Vec<f64>,
    pub censor_time: Vec<f64>,
}

/// Draws a dataset from `spec` using its seed.
pub fn generate(spec: &ExperimentSpec) -> Result<Generated> {
    generate_stream(spec, 0)
}

/// Draws a dataset on substream `stream` of `spec.seed` (one per replication).
pub fn generate_stream(spec: &ExperimentSpec, stream: u64) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let censor = Exp::new(spec.censor_rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let n = spec.n;
    let mut x = Vec::with_capacity(n * 4);
    let mut z = Vec::with_capacity(n * 2);
    let mut y = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    let mut uncured = Vec::with_capacity(n);
    let mut event_time = Vec::with_capacity(n);
    let mut censor_time = Vec::with_capacity(n);
    for _ in 0..n {
        let row = [
            rng.random::<f64>(),
            StandardNormal.sample(&mut rng),
            f64::from(u8::from(rng.random::<f64>() < 0.3)),
            f64::from(u8::from(rng.random::<f64>() < 0.6)),
        ];
        let zr = ExperimentSpec::latency_covariates(&row);
        let p = link_value(spec.link, spec.intercept, dot(&spec.gamma0, &row));
        let b = rng.random::<f64>() < p;
        let t = if b {
            // Inverse of S(t) = exp(-λ t^k e^{βᵀz}).
            let u: f64 = 1.0 - rng.random::<f64>();
            (-u.ln() * (-dot(&spec.beta0, &zr)).exp() / spec.weibull_lambda).powf(1.0 / spec.weibull_shape)
        } else {
            f64::INFINITY
        };
        let c: f64 = censor.sample(&mut rng);
        x.extend_from_slice(&row);
        z.extend_from_slice(&zr);
        y.push(t.min(c));
        delta.push(u8::from(t <= c));
        uncured.push(u8::from(b));
        event_time.push(t);
        censor_time.push(c);
    }
    let dataset = SurvivalDataset::new(y, delta, Matrix::new(n, 4, x)?, Matrix::new(n, 2, z)?)?;
    Ok(Generated { dataset, uncured, event_time, censor_time })
}

/// Cure proportion, censoring rate and plateau proportion of a draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cure_prop: f64,
    pub censor_rate: f64,
    pub plateau_prop: f64,
}

pub fn summarize(g: &Generated) -> Summary {
    let ds = &g.dataset;
    let n = ds.n() as f64;
    let cure_prop = g.uncured.iter().filter(|&&b| b == 0).count() as f64 / n;
    let censor_rate = ds.delta.iter().filter(|&&d| d == 0).count() as f64 / n;
    let plateau_prop = match ds.largest_event_time() {
        Some(tau) => ds.y.iter().filter(|&&y| y > tau).count() as f64 / n,
        None => 0.0,
    };
    Summary { cure_prop, censor_rate, plateau_prop }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_landmarks() {
        assert_eq!(link_value(LinkId::A, 0.0, 0.0), 0.5);
        assert_eq!(link_value(LinkId::C, 0.0, 0.0), 0.5);
        assert!("E".parse::<LinkId>().is_err());
    }

    #[test]
    fn monotone_designs_and_non_monotone_d() {
        let grid: Vec<f64> = (0..1000).map(|i| -4.0 + 8.0 * i as f64 / 999.0).collect();
        for link in [LinkId::A, LinkId::B, LinkId::C] {
            let v: Vec<f64> = grid.iter().map(|&u| link_value(link, 0.3, u)).collect();
            assert!(v.windows(2).all(|w| w[0] <= w[1]), "{link} not monotone");
        }
        let v: Vec<f64> = grid.iter().map(|&u| link_value(LinkId::D, 0.0, u)).collect();
        assert!(v.windows(2).any(|w| w[0] > w[1]));
    }

    #[test]
    fn reproducible_and_stream_separated() {
        let mut spec = ExperimentSpec::preset("exptA").unwrap();
        spec.seed = 7;
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let c = generate_stream(&spec, 1).unwrap();
        assert_ne!(a.dataset.y, c.dataset.y);
    }

    #[test]
    fn presets_are_unit_norm() {
        for name in ["exptA", "exptB", "exptC", "exptD"] {
            let spec = ExperimentSpec::preset(name).unwrap();
            assert!((norm2(&spec.gamma0) - 1.0).abs() < 1e-12);
            spec.validate().unwrap();
        }
    }

    #[test]
    fn vanishing_censoring_rate() {
        let mut spec = ExperimentSpec::preset("exptA").unwrap();
        spec.censor_rate = 1e-9;
        spec.n = 5000;
        let g = generate(&spec).unwrap();
        let s = summarize(&g);
        // Only cured rows are censored.
        assert!((s.censor_rate - s.cure_prop).abs() < 1e-12);
    }

    #[test]
    fn baseline_survival_of_uncured() {
        let mut spec = ExperimentSpec::preset("exptA").unwrap();
        spec.beta0 = vec![0.0, 0.0];
        spec.n = 100_000;
        let g = generate(&spec).unwrap();
        let t: Vec<f64> = g.event_time.iter().copied().filter(|t| t.is_finite()).collect();
        for s in [0.5, 1.0, 1.5, 2.0] {
            let emp = t.iter().filter(|&&v| v > s).count() as f64 / t.len() as f64;
            assert!((emp - (-1.5 * f64::powf(s, 2.2)).exp()).abs() < 0.01, "t = {s}");
        }
    }

    #[test]
    fn no_censoring_means_no_plateau() {
        let ds = SurvivalDataset::new(
            vec![1.0, 2.0],
            vec![1, 1],
            Matrix::new(2, 1, vec![0.0, 1.0]).unwrap(),
            Matrix::new(2, 1, vec![0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let g = Generated { dataset: ds, uncured: vec![1, 1], event_time: vec![1.0, 2.0], censor_time: vec![5.0, 5.0] };
        assert_eq!(summarize(&g).plateau_prop, 0.0);
    }
}
