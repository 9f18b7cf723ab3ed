//! Weighted Cox proportional-hazards latency: profile partial likelihood for
//! `beta` and the weighted Breslow estimator for the baseline cumulative
//! hazard. Tied event times share one risk-set denominator.

use nalgebra::{DMatrix, DVector};

use crate::data::{dot, LatencyParams, SurvivalDataset};
use crate::error::{Error, Result};

const GRAD_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 50;
const DIVERGENCE_NORM: f64 = 1e3;

/// Event times and risk sets of a dataset, built once and shared.
#[derive(Debug, Clone)]
pub struct RiskIndex {
    /// Row indices sorted by ascending follow-up time.
    order: Vec<usize>,
    /// Distinct event times, strictly increasing.
    pub event_times: Vec<f64>,
    /// Number of events at each event time.
    pub event_counts: Vec<usize>,
    /// Risk set at `event_times[k]` is `order[risk_start[k]..]`.
    risk_start: Vec<usize>,
    /// Rows with an event at `event_times[k]` are `event_rows[event_offsets[k]..event_offsets[k+1]]`.
    event_rows: Vec<usize>,
    event_offsets: Vec<usize>,
}

impl RiskIndex {
    pub fn new(ds: &SurvivalDataset) -> Self {
        let n = ds.n();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| ds.y[a].total_cmp(&ds.y[b]).then(a.cmp(&b)));
        let mut event_times = Vec::new();
        let mut event_counts = Vec::new();
        let mut risk_start = Vec::new();
        let mut event_rows = Vec::new();
        let mut event_offsets = vec![0];
        let mut p = 0;
        while p < n {
            let t = ds.y[order[p]];
            let mut q = p;
            let before = event_rows.len();
            while q < n && ds.y[order[q]] == t {
                if ds.is_event(order[q]) {
                    event_rows.push(order[q]);
                }
                q += 1;
            }
            if event_rows.len() > before {
                event_times.push(t);
                event_counts.push(event_rows.len() - before);
                risk_start.push(p);
                event_offsets.push(event_rows.len());
            }
            p = q;
        }
        Self { order, event_times, event_counts, risk_start, event_rows, event_offsets }
    }

    pub fn n_event_times(&self) -> usize {
        self.event_times.len()
    }

    /// Rows at risk just before `event_times[k]`.
    pub fn risk_set(&self, k: usize) -> &[usize] {
        &self.order[self.risk_start[k]..]
    }

    pub fn events_at(&self, k: usize) -> &[usize] {
        &self.event_rows[self.event_offsets[k]..self.event_offsets[k + 1]]
    }

    /// Weighted risk-set sums `Σ w_j exp(βᵀz_j)` at each event time.
    pub fn weighted_denominators(&self, ds: &SurvivalDataset, w: &[f64], beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_event_times()];
        let mut acc = 0.0;
        let mut p = self.order.len();
        for k in (0..self.n_event_times()).rev() {
            while p > self.risk_start[k] {
                p -= 1;
                let j = self.order[p];
                acc += w[j] * dot(beta, ds.z.row(j)).exp();
            }
            out[k] = acc;
        }
        out
    }
}

/// Value, gradient and Hessian of the weighted log partial likelihood.
struct PartialLik {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn partial_likelihood(ds: &SurvivalDataset, ri: &RiskIndex, w: &[f64], beta: &[f64], derivs: bool) -> PartialLik {
    let q = ds.q();
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(q);
    let mut s2 = DMatrix::zeros(q, q);
    let mut value = 0.0;
    let mut grad = DVector::zeros(q);
    let mut hess = DMatrix::zeros(q, q);
    let mut p = ri.order.len();
    for k in (0..ri.n_event_times()).rev() {
        while p > ri.risk_start[k] {
            p -= 1;
            let j = ri.order[p];
            let zj = ds.z.row(j);
            let r = w[j] * dot(beta, zj).exp();
            s0 += r;
            if derivs {
                let zv = DVector::from_column_slice(zj);
                s1.axpy(r, &zv, 1.0);
                s2.ger(r, &zv, &zv, 1.0);
            }
        }
        let d = ri.event_counts[k] as f64;
        for &i in ri.events_at(k) {
            let zi = ds.z.row(i);
            value += dot(beta, zi);
            if derivs {
                for (g, z) in grad.iter_mut().zip(zi) {
                    *g += z;
                }
            }
        }
        value -= d * s0.ln();
        if derivs {
            let mean = &s1 / s0;
            grad.axpy(-d, &mean, 1.0);
            hess -= (&s2 / s0 - &mean * mean.transpose()) * d;
        }
    }
    PartialLik { value, grad, hess }
}

/// Result of a weighted Cox fit.
#[derive(Debug, Clone)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub iterations: usize,
    /// Log partial likelihood at the start and after every accepted step.
    pub loglik_trace: Vec<f64>,
}

/// Weighted log partial likelihood at `beta`.
pub fn weighted_partial_loglik(ds: &SurvivalDataset, ri: &RiskIndex, w: &[f64], beta: &[f64]) -> f64 {
    partial_likelihood(ds, ri, w, beta, false).value
}

/// Newton–Raphson maximizer of the weighted partial likelihood with step halving.
pub fn weighted_cox_beta(ds: &SurvivalDataset, w: &[f64], beta0: &[f64]) -> Result<Vec<f64>> {
    weighted_cox_fit(ds, &RiskIndex::new(ds), w, beta0).map(|f| f.beta)
}

pub fn weighted_cox_fit(ds: &SurvivalDataset, ri: &RiskIndex, w: &[f64], beta0: &[f64]) -> Result<CoxFit> {
    let q = ds.q();
    if beta0.len() != q || w.len() != ds.n() {
        return Err(Error::DimensionMismatch("beta0 or weights do not match the dataset".into()));
    }
    if ri.n_event_times() == 0 {
        return Err(Error::NoEvents);
    }
    let first = ds.z.row(0);
    if (1..ds.n()).all(|i| ds.z.row(i) == first) {
        // Likelihood is flat in beta.
        let beta = vec![0.0; q];
        let ll = weighted_partial_loglik(ds, ri, w, &beta);
        return Ok(CoxFit { beta, iterations: 0, loglik_trace: vec![ll] });
    }
    let mut beta = DVector::from_column_slice(beta0);
    let mut cur = partial_likelihood(ds, ri, w, beta.as_slice(), true);
    let mut trace = vec![cur.value];
    let mut iterations = 0;
    while iterations < MAX_NEWTON && cur.grad.amax() > GRAD_TOL {
        iterations += 1;
        let info = -&cur.hess;
        let step = info.clone().cholesky().map(|c| c.solve(&cur.grad)).or_else(|| info.lu().solve(&cur.grad));
        let step = match step {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => return Err(Error::CollinearLatency),
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &beta + &step * t;
            let next = partial_likelihood(ds, ri, w, cand.as_slice(), true);
            if next.value.is_finite() && next.value >= cur.value {
                accepted = Some((cand, next));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, next)) = accepted else { break };
        beta = cand;
        cur = next;
        trace.push(cur.value);
        if beta.norm() > DIVERGENCE_NORM {
            return Err(Error::PartialLikelihoodUnbounded);
        }
    }
    let norm = beta.norm();
    if norm > 0.0 {
        // A monotone likelihood keeps rising along beta long after the gradient vanishes.
        let probe = &beta * (1.0 + 5.0 / norm.max(1.0));
        if partial_likelihood(ds, ri, w, probe.as_slice(), false).value >= cur.value - 1e-9 {
            return Err(Error::PartialLikelihoodUnbounded);
        }
    }
    if (-&cur.hess).cholesky().is_none() {
        return Err(Error::CollinearLatency);
    }
    Ok(CoxFit { beta: beta.as_slice().to_vec(), iterations, loglik_trace: trace })
}

/// Weighted Breslow estimator `Λ(t) = Σ_{t_k <= t} d_k / Σ_{j ∈ R_k} w_j exp(βᵀz_j)`.
pub fn weighted_breslow(ds: &SurvivalDataset, w: &[f64], beta: &[f64]) -> Result<LatencyParams> {
    weighted_breslow_with(ds, &RiskIndex::new(ds), w, beta)
}

pub fn weighted_breslow_with(ds: &SurvivalDataset, ri: &RiskIndex, w: &[f64], beta: &[f64]) -> Result<LatencyParams> {
    let denoms = ri.weighted_denominators(ds, w, beta);
    let mut steps = Vec::with_capacity(denoms.len());
    let mut cum = 0.0;
    for (k, &s0) in denoms.iter().enumerate() {
        if !(s0 > 0.0) {
            return Err(Error::EmptyRiskSet);
        }
        cum += ri.event_counts[k] as f64 / s0;
        steps.push((ri.event_times[k], cum));
    }
    LatencyParams::new(beta.to_vec(), steps)
}

/// `S_u(t|z) = exp(-Λ(t) exp(βᵀz))`, set to zero past the largest event time.
#[inline]
pub fn survival_uncured(latency: &LatencyParams, t: f64, z: &[f64], largest_event_time: f64) -> f64 {
    if t > largest_event_time {
        return 0.0;
    }
    (-latency.cumulative_hazard(t) * dot(&latency.beta, z).exp()).exp()
}
