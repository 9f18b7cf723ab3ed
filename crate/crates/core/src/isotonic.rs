//! Order-restricted least squares and bounded Bernoulli MLE on a line.
//!
//! The weighted isotonic fit is the vector of left derivatives of the
//! greatest convex minorant of the cumulative sum diagram; it is computed
//! here with stack-based pool-adjacent-violators. Clipping that fit to
//! `[lower, upper]` gives the bound-restricted Bernoulli MLE, and the
//! range-regularized problem reduces to choosing the clip levels.

use serde::{Deserialize, Serialize};

use crate::data::{IndexCoefficients, LatencyParams, MonotoneStepLink, SurvivalDataset};
use crate::error::{Error, Result};
use crate::link_em::estep_weights;
use crate::metrics::epecp;

/// Weighted isotonic problem on tie-merged positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicProblem {
    pub positions: Vec<f64>,
    /// Mean target at each position.
    pub targets: Vec<f64>,
    /// Number of observations merged into each position.
    pub multiplicities: Vec<usize>,
}

impl IsotonicProblem {
    pub fn new(positions: Vec<f64>, targets: Vec<f64>, multiplicities: Vec<usize>) -> Result<Self> {
        let p = Self { positions, targets, multiplicities };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.positions.len();
        if m == 0 {
            return Err(Error::EmptyProblem);
        }
        if self.targets.len() != m || self.multiplicities.len() != m {
            return Err(Error::DimensionMismatch("isotonic problem field lengths differ".into()));
        }
        if self.positions.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("positions must be strictly increasing".into()));
        }
        if self.targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidArgument("targets must lie in [0, 1]".into()));
        }
        if self.multiplicities.contains(&0) {
            return Err(Error::InvalidArgument("multiplicities must be >= 1".into()));
        }
        Ok(())
    }

    /// Sorts observations by index value and merges exact ties, averaging
    /// their targets. Also returns, for each observation, its position slot.
    pub fn from_observations(index: &[f64], targets: &[f64]) -> Result<(Self, Vec<usize>)> {
        let order = TieMerge::new(index)?;
        let prob = order.problem(targets);
        Ok((prob, order.slot))
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Sorted, tie-merged layout of a set of index values, reusable across
/// targets that change while the index stays fixed.
#[derive(Debug, Clone)]
pub(crate) struct TieMerge {
    pub positions: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Position slot of each observation.
    pub slot: Vec<usize>,
}

impl TieMerge {
    pub fn new(index: &[f64]) -> Result<Self> {
        if index.is_empty() {
            return Err(Error::EmptyProblem);
        }
        if index.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidArgument("non-finite index value".into()));
        }
        let mut order: Vec<usize> = (0..index.len()).collect();
        order.sort_by(|&a, &b| index[a].total_cmp(&index[b]));
        let mut positions = Vec::with_capacity(index.len());
        let mut multiplicities = Vec::with_capacity(index.len());
        let mut slot = vec![0; index.len()];
        for &i in &order {
            if positions.last() != Some(&index[i]) {
                positions.push(index[i]);
                multiplicities.push(0);
            }
            *multiplicities.last_mut().unwrap() += 1;
            slot[i] = positions.len() - 1;
        }
        Ok(Self { positions, multiplicities, slot })
    }

    /// Per-position mean of `targets`.
    pub fn merged_targets(&self, targets: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.positions.len()];
        for (i, &s) in self.slot.iter().enumerate() {
            sums[s] += targets[i];
        }
        sums.iter()
            .zip(&self.multiplicities)
            .map(|(s, &m)| (s / m as f64).clamp(0.0, 1.0))
            .collect()
    }

    pub fn problem(&self, targets: &[f64]) -> IsotonicProblem {
        IsotonicProblem {
            positions: self.positions.clone(),
            targets: self.merged_targets(targets),
            multiplicities: self.multiplicities.clone(),
        }
    }
}

/// Weighted pool-adjacent-violators on raw slices.
pub(crate) fn pava(targets: &[f64], weights: &[usize]) -> Vec<f64> {
    // (total weight, weighted mean, number of positions)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(targets.len());
    for (&t, &w) in targets.iter().zip(weights) {
        let mut cur = (w as f64, t, 1usize);
        while let Some(&(pw, pm, pl)) = blocks.last() {
            if pm < cur.1 {
                break;
            }
            blocks.pop();
            let tw = pw + cur.0;
            cur = (tw, (pw * pm + cur.0 * cur.1) / tw, pl + cur.2);
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(targets.len());
    for (_, mean, len) in blocks {
        out.extend(std::iter::repeat_n(mean, len));
    }
    out
}

/// Weighted isotonic least-squares fit (left derivatives of the GCM of the
/// cumulative sum diagram).
pub fn isotonic_ls(prob: &IsotonicProblem) -> Result<Vec<f64>> {
    prob.validate()?;
    Ok(pava(&prob.targets, &prob.multiplicities))
}

/// Bound-restricted monotone Bernoulli MLE: the isotonic fit clipped to
/// `[lower, upper]`, as a step link on the problem positions.
pub fn isotonic_mle_truncated(prob: &IsotonicProblem, lower: f64, upper: f64) -> Result<MonotoneStepLink> {
    check_bounds(lower, upper)?;
    let values = isotonic_ls(prob)?.into_iter().map(|v| v.clamp(lower, upper)).collect();
    MonotoneStepLink::new(prob.positions.clone(), values, lower, upper)
}

pub(crate) fn check_bounds(lower: f64, upper: f64) -> Result<()> {
    if !(lower > 0.0 && upper < 1.0 && lower < upper) {
        return Err(Error::InvalidArgument(format!(
            "truncation bounds ({lower}, {upper}) must satisfy 0 < lower < upper < 1"
        )));
    }
    Ok(())
}

/// Solution of the range-regularized isotonic problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeRegularizedFit {
    pub values: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

/// Minimizes `Σ mult_j (t_j - y_j)^2 + mu (b - a)` over `a <= y_1 <= ... <= y_m <= b`.
///
/// For fixed `(a, b)` the optimum is the isotonic fit clipped to `[a, b]`.
/// The remaining objective separates into a convex function of `a` plus one
/// of `b` whose derivatives are piecewise linear, so the clip levels solve
/// `2 Σ_{ŷ<a} mult (a - ŷ) = mu` and `2 Σ_{ŷ>b} mult (ŷ - b) = mu` exactly.
/// When those levels cross, the constant fit at the weighted mean wins.
pub fn range_regularized_isotonic(prob: &IsotonicProblem, mu: f64) -> Result<RangeRegularizedFit> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("regularization mu must be >= 0, got {mu}")));
    }
    let fit = isotonic_ls(prob)?;
    let mult = &prob.multiplicities;
    let m = fit.len();
    if mu == 0.0 {
        return Ok(RangeRegularizedFit { a: fit[0], b: fit[m - 1], values: fit });
    }
    let half = mu / 2.0;

    let mut a = None;
    let (mut w, mut s) = (0.0, 0.0);
    for k in 0..m {
        w += mult[k] as f64;
        s += mult[k] as f64 * fit[k];
        let cand = (half + s) / w;
        if k + 1 == m || cand <= fit[k + 1] {
            a = Some(cand);
            break;
        }
    }
    let mut b = None;
    let (mut w, mut s) = (0.0, 0.0);
    for k in (0..m).rev() {
        w += mult[k] as f64;
        s += mult[k] as f64 * fit[k];
        let cand = (s - half) / w;
        if k == 0 || cand >= fit[k - 1] {
            b = Some(cand);
            break;
        }
    }
    let (a, b) = (a.unwrap(), b.unwrap());
    if a >= b {
        let total: f64 = mult.iter().map(|&c| c as f64).sum();
        let mean = prob.targets.iter().zip(mult).map(|(t, &c)| t * c as f64).sum::<f64>() / total;
        return Ok(RangeRegularizedFit { values: vec![mean; m], a: mean, b: mean });
    }
    let values: Vec<f64> = fit.iter().map(|v| v.clamp(a, b)).collect();
    Ok(RangeRegularizedFit { a: values[0], b: values[m - 1], values })
}

/// Data-driven truncation bounds chosen by K-fold cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationChoice {
    pub lower: f64,
    pub upper: f64,
    pub mu: f64,
}

/// Default regularization grid: 20 log-spaced values in `[1e-4, 1e2]`, times `n`.
pub fn default_mu_grid(n: usize) -> Vec<f64> {
    let (lo, hi) = (1e-4f64.ln(), 1e2f64.ln());
    (0..20)
        .map(|i| (lo + (hi - lo) * i as f64 / 19.0).exp() * n as f64)
        .collect()
}

/// Picks truncation bounds by K-fold cross-validation of the
/// range-regularized link, scored by EPECP on held-out rows.
///
/// The E-step weights are computed once at `(gamma, latency, init_link)`.
/// Fold `k` holds the rows with `i % folds == k`. The returned bounds are
/// clamped into `[epsilon, 1 - epsilon]`.
pub fn select_truncation_cv(
    ds: &SurvivalDataset,
    gamma: &IndexCoefficients,
    latency: &LatencyParams,
    init_link: &dyn Fn(f64) -> f64,
    mu_grid: &[f64],
    folds: usize,
    epsilon: f64,
) -> Result<TruncationChoice> {
    let n = ds.n();
    if mu_grid.is_empty() {
        return Err(Error::InvalidArgument("empty mu grid".into()));
    }
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!("fold count {folds} must be in [2, {n}]")));
    }
    let index = ds.x.mul_vec(gamma.as_slice());
    let link_values: Vec<f64> = index.iter().map(|&u| init_link(u).clamp(epsilon, 1.0 - epsilon)).collect();
    let tau = ds.largest_event_time().ok_or(Error::NoEvents)?;
    let w = estep_weights(ds, &link_values, latency, tau);

    let mut best: Option<(f64, f64)> = None;
    for &mu in mu_grid {
        let mut score = 0.0;
        for k in 0..folds {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % folds != k);
            let tr_index: Vec<f64> = train.iter().map(|&i| index[i]).collect();
            let tr_w: Vec<f64> = train.iter().map(|&i| w[i]).collect();
            let (prob, _) = IsotonicProblem::from_observations(&tr_index, &tr_w)?;
            let fit = range_regularized_isotonic(&prob, mu)?;
            let p_hat: Vec<f64> = test
                .iter()
                .map(|&i| {
                    let j = prob.positions.partition_point(|&p| p < index[i]);
                    fit.values[j.min(fit.values.len() - 1)]
                })
                .collect();
            let w_test: Vec<f64> = test.iter().map(|&i| w[i]).collect();
            score += epecp(&w_test, &p_hat)? * test.len() as f64;
        }
        score /= n as f64;
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, mu));
        }
    }
    let mu = best.unwrap().1;
    let (prob, _) = IsotonicProblem::from_observations(&index, &w)?;
    let fit = range_regularized_isotonic(&prob, mu)?;
    let clamp = |v: f64| v.clamp(epsilon, 1.0 - epsilon);
    Ok(TruncationChoice { lower: clamp(fit.a), upper: clamp(fit.b), mu })
}
