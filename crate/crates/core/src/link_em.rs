//! EM computation of the bounded monotone link for a fixed index and latency.

use crate::data::{dot, LatencyParams, MonotoneStepLink, SurvivalDataset};
use crate::error::{Error, Result};
use crate::isotonic::{check_bounds, pava, TieMerge};
use crate::latency::survival_uncured;

/// Default inner convergence tolerance (sup-norm change of link values).
pub const LINK_TOL: f64 = 1e-6;
pub const LINK_MAX_ITER: usize = 500;

/// E-step weight for one row given its uncure probability and `S_u(y|z)`.
#[inline]
pub fn estep_weight(event: bool, p: f64, surv: f64) -> f64 {
    if event {
        1.0
    } else {
        let num = p * surv;
        num / (1.0 - p + num)
    }
}

/// E-step weights `w_i = δ_i + (1-δ_i) φS_u / (1 - φ + φS_u)` given each row's
/// link value `link_values[i]` and the latency parameters.
pub fn estep_weights(
    ds: &SurvivalDataset,
    link_values: &[f64],
    latency: &LatencyParams,
    largest_event_time: f64,
) -> Vec<f64> {
    (0..ds.n())
        .map(|i| {
            let s = if ds.is_event(i) {
                1.0
            } else {
                survival_uncured(latency, ds.y[i], ds.z.row(i), largest_event_time)
            };
            estep_weight(ds.is_event(i), link_values[i], s)
        })
        .collect()
}

/// As [`estep_weights`] with the link given as a function of the index `γᵀx`.
pub fn estep_weights_with(
    ds: &SurvivalDataset,
    link: &dyn Fn(f64) -> f64,
    gamma: &[f64],
    latency: &LatencyParams,
    largest_event_time: f64,
) -> Vec<f64> {
    let values: Vec<f64> = (0..ds.n()).map(|i| link(dot(gamma, ds.x.row(i)))).collect();
    estep_weights(ds, &values, latency, largest_event_time)
}

/// `S_u(y_i | z_i)` for every row, with the zero-tail constraint.
pub fn uncured_survival_at_data(ds: &SurvivalDataset, latency: &LatencyParams, largest_event_time: f64) -> Vec<f64> {
    (0..ds.n())
        .map(|i| survival_uncured(latency, ds.y[i], ds.z.row(i), largest_event_time))
        .collect()
}

/// Outcome of the link EM.
#[derive(Debug, Clone)]
pub struct LinkFit {
    pub link: MonotoneStepLink,
    pub iterations: usize,
    pub converged: bool,
    /// Incidence part of the observed log-likelihood after each iteration,
    /// starting with the value at the initial link.
    pub loglik_trace: Vec<f64>,
}

/// Incidence-dependent part of the observed log-likelihood:
/// `Σ δ log φ + (1-δ) log(1 - φ + φ S_u)`.
pub fn incidence_loglik(delta: &[u8], p: &[f64], surv: &[f64]) -> f64 {
    delta
        .iter()
        .zip(p)
        .zip(surv)
        .map(|((&d, &p), &s)| if d == 1 { p.ln() } else { (1.0 - p + p * s).ln() })
        .sum()
}

/// Bounded monotone link MLE for fixed `(γ, β, Λ)` by EM: alternates the
/// E-step and the clipped isotonic M-step on the tie-merged index until the
/// link values change by less than `tol` in sup norm.
#[allow(clippy::too_many_arguments)]
pub fn fit_link(
    ds: &SurvivalDataset,
    gamma: &[f64],
    latency: &LatencyParams,
    init_link: &dyn Fn(f64) -> f64,
    lower: f64,
    upper: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LinkFit> {
    if gamma.len() != ds.d() {
        return Err(Error::DimensionMismatch(format!("gamma has {} entries, x has {} columns", gamma.len(), ds.d())));
    }
    let tau = ds.largest_event_time().ok_or(Error::NoEvents)?;
    let index = ds.x.mul_vec(gamma);
    let surv = uncured_survival_at_data(ds, latency, tau);
    let merge = TieMerge::new(&index)?;
    fit_link_prepared(&merge, &ds.delta, &surv, init_link, lower, upper, tol, max_iter, false)
}

/// Link EM on a prepared tie-merged index. With `accelerate`, cycles of two
/// EM maps are extrapolated (squared iterative scheme), projected back onto
/// the bounded monotone cone and stabilized by one more EM map; a cycle whose
/// result lowers the likelihood falls back to the plain second map. The
/// stopping rule is the plain one: one EM map moves no value by `tol` or more.
/// `max_iter` counts EM maps.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit_link_prepared(
    merge: &TieMerge,
    delta: &[u8],
    surv: &[f64],
    init_link: &dyn Fn(f64) -> f64,
    lower: f64,
    upper: f64,
    tol: f64,
    max_iter: usize,
    accelerate: bool,
) -> Result<LinkFit> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("link tolerance must be positive".into()));
    }
    let m = merge.positions.len();
    if lower == upper {
        // Degenerate truncation: the only feasible link is constant.
        check_bounds(lower, (lower + 1.0) / 2.0)?;
        let link = MonotoneStepLink::new(merge.positions.clone(), vec![lower; m], lower, upper)?;
        return Ok(LinkFit { link, iterations: 0, converged: true, loglik_trace: vec![] });
    }
    check_bounds(lower, upper)?;
    let n = delta.len();
    let mut w = vec![0.0; n];
    let mut p = vec![0.0; n];
    let fill = |p: &mut Vec<f64>, values: &[f64]| {
        for (pi, &s) in p.iter_mut().zip(&merge.slot) {
            *pi = values[s];
        }
    };
    let project = |v: &[f64]| -> Vec<f64> {
        pava(v, &merge.multiplicities).into_iter().map(|a| a.clamp(lower, upper)).collect()
    };
    let mut map = |values: &[f64]| -> Vec<f64> {
        fill(&mut p, values);
        for i in 0..n {
            w[i] = estep_weight(delta[i] == 1, p[i], surv[i]);
        }
        project(&merge.merged_targets(&w))
    };
    let loglik = |values: &[f64]| -> f64 {
        delta
            .iter()
            .zip(&merge.slot)
            .zip(surv)
            .map(|((&d, &j), &s)| {
                let p = values[j];
                if d == 1 {
                    p.ln()
                } else {
                    (1.0 - p + p * s).ln()
                }
            })
            .sum()
    };
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    let mut values: Vec<f64> = merge.positions.iter().map(|&u| init_link(u).clamp(lower, upper)).collect();
    let mut trace = vec![loglik(&values)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let f1 = map(&values);
        iterations += 1;
        let change = sup(&f1, &values);
        if change < tol || !accelerate || iterations + 2 > max_iter {
            values = f1;
            trace.push(loglik(&values));
            if change < tol {
                converged = true;
                break;
            }
            continue;
        }
        let f2 = map(&f1);
        iterations += 1;
        let r: Vec<f64> = f1.iter().zip(&values).map(|(a, b)| a - b).collect();
        let v: Vec<f64> = f2.iter().zip(&f1).zip(&values).map(|((c, b), a)| c - 2.0 * b + a).collect();
        let (nr, nv) = (r.iter().map(|x| x * x).sum::<f64>().sqrt(), v.iter().map(|x| x * x).sum::<f64>().sqrt());
        let mut next = f2;
        if nv > 0.0 {
            let alpha = (-nr / nv).min(-1.0);
            let ext: Vec<f64> = values
                .iter()
                .zip(&r)
                .zip(&v)
                .map(|((x, r), v)| x - 2.0 * alpha * r + alpha * alpha * v)
                .collect();
            let f3 = map(&project(&ext));
            iterations += 1;
            let (l3, l2) = (loglik(&f3), loglik(&next));
            if l3 >= l2 {
                next = f3;
            }
        }
        values = next;
        trace.push(loglik(&values));
    }
    let link = MonotoneStepLink::new(merge.positions.clone(), values, lower, upper)?;
    Ok(LinkFit { link, iterations, converged, loglik_trace: trace })
}

/// As [`fit_link`] with the accelerated EM cycles of [`fit_link_prepared`].
#[allow(clippy::too_many_arguments)]
pub fn fit_link_accelerated(
    ds: &SurvivalDataset,
    gamma: &[f64],
    latency: &LatencyParams,
    init_link: &dyn Fn(f64) -> f64,
    lower: f64,
    upper: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LinkFit> {
    if gamma.len() != ds.d() {
        return Err(Error::DimensionMismatch(format!("gamma has {} entries, x has {} columns", gamma.len(), ds.d())));
    }
    let tau = ds.largest_event_time().ok_or(Error::NoEvents)?;
    let index = ds.x.mul_vec(gamma);
    let surv = uncured_survival_at_data(ds, latency, tau);
    let merge = TieMerge::new(&index)?;
    fit_link_prepared(&merge, &ds.delta, &surv, init_link, lower, upper, tol, max_iter, true)
}
