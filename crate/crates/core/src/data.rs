//! Core domain types: datasets, index coefficients, latency parameters and
//! link functions, together with their validity rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIT_NORM_TOL: f64 = 1e-8;

/// Dense row-major matrix with an explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix of shape ({rows}, {cols}) needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `self * v` for a length-`cols` vector.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// New matrix made of the given rows, in order (repeats allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Right-censored observations `(y, delta, x, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    /// Follow-up times.
    pub y: Vec<f64>,
    /// Event indicators, 1 for an observed event.
    pub delta: Vec<u8>,
    /// Incidence covariates, `n x d`.
    pub x: Matrix,
    /// Latency covariates, `n x q`.
    pub z: Matrix,
}

impl SurvivalDataset {
    /// Builds and validates a dataset.
    pub fn new(y: Vec<f64>, delta: Vec<u8>, x: Matrix, z: Matrix) -> Result<Self> {
        let ds = Self { y, delta, x, z };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn q(&self) -> usize {
        self.z.cols()
    }

    #[inline]
    pub fn is_event(&self, i: usize) -> bool {
        self.delta[i] == 1
    }

    /// Checks every dataset invariant, naming the first offending row/column.
    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.delta.len() != n || self.x.rows() != n || self.z.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} entries, delta {}, x {} rows, z {} rows",
                self.delta.len(),
                self.x.rows(),
                self.z.rows()
            )));
        }
        if self.x.cols() == 0 || self.z.cols() == 0 {
            return Err(Error::DimensionMismatch(
                "need at least one incidence and one latency covariate".into(),
            ));
        }
        for (i, &yi) in self.y.iter().enumerate() {
            if !yi.is_finite() {
                return Err(Error::NonFinite { row: i, column: "y".into() });
            }
            if yi < 0.0 {
                return Err(Error::NegativeTime(i));
            }
        }
        if let Some(i) = self.delta.iter().position(|&d| d > 1) {
            return Err(Error::NonBinaryIndicator(i));
        }
        for (name, m) in [("x", &self.x), ("z", &self.z)] {
            for i in 0..m.rows() {
                if let Some(j) = m.row(i).iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { row: i, column: format!("{name}{}", j + 1) });
                }
            }
        }
        Ok(())
    }

    /// Largest time with an observed event, or `None` when there is none.
    pub fn largest_event_time(&self) -> Option<f64> {
        self.y
            .iter()
            .zip(&self.delta)
            .filter(|(_, &d)| d == 1)
            .map(|(&y, _)| y)
            .fold(None, |acc: Option<f64>, y| Some(acc.map_or(y, |a| a.max(y))))
    }

    pub fn n_events(&self) -> usize {
        self.delta.iter().filter(|&&d| d == 1).count()
    }

    /// Dataset made of the given rows (repeats allowed, e.g. bootstrap).
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            delta: idx.iter().map(|&i| self.delta[i]).collect(),
            x: self.x.select_rows(idx),
            z: self.z.select_rows(idx),
        }
    }
}

/// Incidence index coefficients on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexCoefficients {
    gamma: Vec<f64>,
}

impl IndexCoefficients {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        let norm = norm2(&gamma);
        if gamma.is_empty() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidArgument(format!("gamma must have unit norm, got {norm}")));
        }
        Ok(Self { gamma })
    }

    /// Normalizes a nonzero vector onto the sphere.
    pub fn normalized(gamma: &[f64]) -> Result<Self> {
        let norm = norm2(gamma);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
        }
        Ok(Self { gamma: gamma.iter().map(|g| g / norm).collect() })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }
}

/// Cox latency parameters: regression coefficients and the baseline
/// cumulative hazard as a right-continuous step function with `Λ(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams {
    pub beta: Vec<f64>,
    /// `(time, cumulative hazard)` at each jump, times strictly increasing.
    pub lambda_steps: Vec<(f64, f64)>,
}

impl LatencyParams {
    pub fn new(beta: Vec<f64>, lambda_steps: Vec<(f64, f64)>) -> Result<Self> {
        let lp = Self { beta, lambda_steps };
        lp.validate()?;
        Ok(lp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("non-finite beta".into()));
        }
        let mut prev = (f64::NEG_INFINITY, 0.0);
        for &(t, v) in &self.lambda_steps {
            if !t.is_finite() || !v.is_finite() || v < 0.0 || t <= prev.0 || v < prev.1 {
                return Err(Error::InvalidArgument(format!(
                    "cumulative hazard must be finite, nonnegative and nondecreasing; bad step ({t}, {v})"
                )));
            }
            prev = (t, v);
        }
        Ok(())
    }

    /// `Λ(t)`, right-continuous.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let k = self.lambda_steps.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            0.0
        } else {
            self.lambda_steps[k - 1].1
        }
    }

    /// Jump of `Λ` at exactly `t` (zero when `t` is not a jump time).
    pub fn jump_at(&self, t: f64) -> f64 {
        let k = self.lambda_steps.partition_point(|&(s, _)| s < t);
        match self.lambda_steps.get(k) {
            Some(&(s, v)) if s == t => {
                let before = if k == 0 { 0.0 } else { self.lambda_steps[k - 1].1 };
                v - before
            }
            _ => 0.0,
        }
    }

    /// Last jump time of `Λ` (the largest event time for a Breslow fit).
    pub fn last_jump_time(&self) -> f64 {
        self.lambda_steps.last().map_or(0.0, |s| s.0)
    }
}

/// Nondecreasing left-continuous step function on positions `knots`,
/// extended constantly outside `[knots[0], knots[m-1]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneStepLink {
    knots: Vec<f64>,
    values: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl MonotoneStepLink {
    /// Requires strictly increasing knots, nondecreasing values within
    /// `[lower, upper]` and `0 < lower <= upper < 1`. Equal bounds encode a
    /// link truncated to a single value.
    pub fn new(knots: Vec<f64>, values: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} knots and {} values",
                knots.len(),
                values.len()
            )));
        }
        if !(lower > 0.0 && lower <= upper && upper < 1.0) {
            return Err(Error::InvalidArgument(format!("bounds ({lower}, {upper}) not in (0,1)")));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("knots must be finite and strictly increasing".into()));
        }
        if values.windows(2).any(|w| w[0] > w[1]) || values.iter().any(|&v| !(v >= lower && v <= upper))
        {
            return Err(Error::InvalidArgument("values must be nondecreasing within bounds".into()));
        }
        Ok(Self { knots, values, lower, upper })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Value on `(knots[j-1], knots[j]]` is `values[j]`.
    #[inline]
    pub fn evaluate(&self, u: f64) -> f64 {
        let j = self.knots.partition_point(|&k| k < u);
        self.values[j.min(self.values.len() - 1)]
    }
}

/// Kernel identifiers for link smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Triweight,
}

/// Kernel-smoothed monotone link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedLink {
    pub(crate) base: MonotoneStepLink,
    pub(crate) bandwidth: f64,
    pub(crate) kernel: Kernel,
}

impl SmoothedLink {
    pub fn base(&self) -> &MonotoneStepLink {
        &self.base
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }
}

/// The incidence link of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum IncidenceLink {
    /// Kernel-smoothed isotonic link (the default estimator).
    Smoothed(SmoothedLink),
    /// Raw isotonic step link (score-based variant).
    Step(MonotoneStepLink),
    /// `p(u) = 1 / (1 + exp(-(intercept + scale * u)))` on the unit-norm index.
    Logistic { intercept: f64, scale: f64 },
}

impl IncidenceLink {
    #[inline]
    pub fn evaluate(&self, u: f64) -> f64 {
        match self {
            IncidenceLink::Smoothed(s) => s.evaluate(u),
            IncidenceLink::Step(s) => s.evaluate(u),
            IncidenceLink::Logistic { intercept, scale } => logistic(intercept + scale * u),
        }
    }

    /// Underlying isotonic step link, if any.
    pub fn step(&self) -> Option<&MonotoneStepLink> {
        match self {
            IncidenceLink::Smoothed(s) => Some(&s.base),
            IncidenceLink::Step(s) => Some(s),
            IncidenceLink::Logistic { .. } => None,
        }
    }
}

#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Full state of a fitted mixture cure model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub gamma: IndexCoefficients,
    pub latency: LatencyParams,
    pub link: IncidenceLink,
    /// Observed log-likelihood at the returned parameters.
    pub loglik: f64,
    /// Outer EM iterations performed.
    pub iterations: usize,
    pub converged: bool,
    /// Unnormalized `(intercept, coefficients...)` of a logistic incidence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_raw: Option<Vec<f64>>,
}

impl ModelParams {
    /// Largest event time of the training data; `S_u` vanishes beyond it.
    pub fn largest_event_time(&self) -> f64 {
        self.latency.last_jump_time()
    }

    /// Uncure probability `p(x)`.
    pub fn incidence(&self, x: &[f64]) -> f64 {
        self.link.evaluate(dot(self.gamma.as_slice(), x))
    }
}
