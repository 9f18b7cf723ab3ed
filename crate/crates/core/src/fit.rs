//! Outer EM for the mixture cure model: monotone single-index incidence
//! (smoothed or score-based) or logistic incidence, Cox latency.

use serde::{Deserialize, Serialize};

use crate::data::{
    dot, logistic, norm2, IncidenceLink, IndexCoefficients, LatencyParams, Matrix, ModelParams, SurvivalDataset,
};
use crate::error::{Error, Result};
use crate::isotonic::{default_mu_grid, select_truncation_cv, TieMerge};
use crate::latency::{survival_uncured, weighted_breslow_with, weighted_cox_fit, RiskIndex};
use crate::link_em::{estep_weight, fit_link_prepared, uncured_survival_at_data, LINK_MAX_ITER, LINK_TOL};
use crate::logistic::{fit_logistic, linear_predictor};
use crate::optim::{maximize_on_sphere, AugLagOptions, NelderMeadOptions};
use crate::smoothing::{bandwidth_or_fallback, smooth_link};

/// Halvings tried before an outer step that lowers the likelihood is abandoned.
const MAX_BACKTRACK: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GammaSolver {
    #[default]
    AugmentedLagrangian,
    Score,
}

/// Estimator selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Msic,
    MsicScore,
    Lc,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msic" => Ok(Method::Msic),
            "msic-score" => Ok(Method::MsicScore),
            "lc" => Ok(Method::Lc),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?} (expected msic, msic-score or lc)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Msic => "msic",
            Method::MsicScore => "msic-score",
            Method::Lc => "lc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub epsilon_prime: f64,
    pub use_cv_truncation: bool,
    pub cv_folds: usize,
    pub bandwidth_multiplier: f64,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub link_tol: f64,
    pub link_max_iter: usize,
    /// Link EM cap while profiling candidate γ's.
    pub candidate_link_max_iter: usize,
    pub gamma_solver: GammaSolver,
    /// Function evaluations per inner Nelder–Mead run.
    pub gamma_max_evals: usize,
    /// Initial simplex edge of the inner Nelder–Mead runs.
    pub gamma_initial_step: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epsilon_prime: 1e-6,
            use_cv_truncation: false,
            cv_folds: 5,
            bandwidth_multiplier: 1.0,
            outer_tol: 1e-5,
            outer_max_iter: 200,
            link_tol: LINK_TOL,
            link_max_iter: LINK_MAX_ITER,
            candidate_link_max_iter: 100,
            gamma_solver: GammaSolver::AugmentedLagrangian,
            gamma_max_evals: 200,
            gamma_initial_step: 0.05,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.epsilon_prime > 0.0 && self.epsilon_prime < 0.5) {
            return bad("epsilon_prime must lie in (0, 0.5)");
        }
        if !(self.outer_tol > 0.0 && self.link_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.bandwidth_multiplier > 0.0) {
            return bad("bandwidth_multiplier must be positive");
        }
        if self.outer_max_iter == 0 || self.link_max_iter == 0 || self.candidate_link_max_iter == 0 {
            return bad("iteration caps must be positive");
        }
        if !(self.gamma_initial_step > 0.0) {
            return bad("gamma_initial_step must be positive");
        }
        if self.gamma_max_evals < 10 {
            return bad("gamma_max_evals must be at least 10");
        }
        if self.use_cv_truncation && self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        Ok(())
    }
}

/// Starting values of the outer EM.
#[derive(Debug, Clone)]
pub struct Initial {
    pub gamma: IndexCoefficients,
    pub latency: LatencyParams,
    /// Logistic starting link on the unit-norm index.
    pub link: IncidenceLink,
    /// `(intercept, coefficients...)` of the logistic fit, if it succeeded.
    pub logistic_coef: Option<Vec<f64>>,
}

/// Logistic regression of δ on X for γ, unweighted Cox on the events for
/// the latency and the fitted logistic curve as starting link.
pub fn initialize(ds: &SurvivalDataset) -> Result<Initial> {
    ds.validate()?;
    let events = ds.n_events();
    if events == 0 {
        return Err(Error::NoEvents);
    }
    if events == ds.n() {
        return Err(Error::NoCensored);
    }
    let delta: Vec<f64> = ds.delta.iter().map(|&d| f64::from(d)).collect();
    let d = ds.d();
    let e1 = || {
        let mut g = vec![0.0; d];
        g[0] = 1.0;
        g
    };
    let (gamma, link, logistic_coef) = match fit_logistic(&ds.x, &delta, None) {
        Ok(fit) if norm2(&fit.coef[1..]) > 0.0 => {
            let s = norm2(&fit.coef[1..]);
            let g = IndexCoefficients::normalized(&fit.coef[1..])?;
            (g, IncidenceLink::Logistic { intercept: fit.coef[0], scale: s }, Some(fit.coef))
        }
        _ => {
            log::warn!("logistic initialization failed; starting from the first basis vector");
            (IndexCoefficients::new(e1())?, IncidenceLink::Logistic { intercept: 0.0, scale: 1.0 }, None)
        }
    };
    // Zero weights on censored rows give the Cox fit on the event subset.
    let ri = RiskIndex::new(ds);
    let beta = weighted_cox_fit(ds, &ri, &delta, &vec![0.0; ds.q()])?.beta;
    let latency = weighted_breslow_with(ds, &ri, &delta, &beta)?;
    Ok(Initial { gamma, latency, link, logistic_coef })
}

/// Observed log-likelihood of the mixture with Breslow jumps for the hazard
/// and `S_u = 0` past the largest event time; `p[i]` is the uncure
/// probability of row `i`.
pub fn observed_loglik(ds: &SurvivalDataset, p: &[f64], latency: &LatencyParams) -> f64 {
    let tau = latency.last_jump_time();
    (0..ds.n())
        .map(|i| {
            let z = ds.z.row(i);
            if ds.is_event(i) {
                let eta = dot(&latency.beta, z);
                p[i].ln() + latency.jump_at(ds.y[i]).ln() + eta - latency.cumulative_hazard(ds.y[i]) * eta.exp()
            } else {
                let s = survival_uncured(latency, ds.y[i], z, tau);
                (1.0 - p[i] + p[i] * s).ln()
            }
        })
        .sum()
}

/// Objective of the γ M-step with `(β, Λ)` and the E-step weights frozen.
struct GammaProblem<'a> {
    x: &'a Matrix,
    delta: &'a [u8],
    w: &'a [f64],
    surv: Vec<f64>,
    init_link: &'a dyn Fn(f64) -> f64,
    lower: f64,
    upper: f64,
    multiplier: f64,
    link_tol: f64,
    link_max_iter: usize,
}

impl GammaProblem<'_> {
    /// Link refitted at `gamma`: step link plus per-row smoothed and step values.
    fn profile(&self, gamma: &[f64], max_iter: usize, smooth: bool) -> Result<(IncidenceLink, Vec<f64>)> {
        let index = self.x.mul_vec(gamma);
        let merge = TieMerge::new(&index)?;
        let fit = fit_link_prepared(
            &merge,
            self.delta,
            &self.surv,
            self.init_link,
            self.lower,
            self.upper,
            self.link_tol,
            max_iter,
            true,
        )?;
        if smooth {
            let h = bandwidth_or_fallback(&index, index.len(), self.multiplier)?;
            let s = smooth_link(&fit.link, h)?;
            let p = s.evaluate_many(&index);
            Ok((IncidenceLink::Smoothed(s), p))
        } else {
            let p = merge.slot.iter().map(|&j| fit.link.values()[j]).collect();
            Ok((IncidenceLink::Step(fit.link), p))
        }
    }

    fn bernoulli(&self, gamma: &[f64]) -> f64 {
        match self.profile(gamma, self.link_max_iter, true) {
            Ok((_, p)) => self
                .w
                .iter()
                .zip(&p)
                .map(|(&w, &p)| w * p.ln() + (1.0 - w) * (1.0 - p).ln())
                .sum(),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn score_norm2(&self, gamma: &[f64]) -> f64 {
        match self.profile(gamma, self.link_max_iter, false) {
            Ok((_, p)) => {
                let mut s = vec![0.0; self.x.cols()];
                for (i, (&w, &p)) in self.w.iter().zip(&p).enumerate() {
                    let c = w / p - (1.0 - w) / (1.0 - p);
                    for (sj, xj) in s.iter_mut().zip(self.x.row(i)) {
                        *sj += c * xj;
                    }
                }
                s.iter().map(|v| v * v).sum()
            }
            Err(_) => f64::INFINITY,
        }
    }
}

fn gamma_problem<'a>(
    ds: &'a SurvivalDataset,
    latency: &LatencyParams,
    w: &'a [f64],
    init_link: &'a dyn Fn(f64) -> f64,
    bounds: (f64, f64),
    cfg: &FitConfig,
) -> Result<GammaProblem<'a>> {
    if w.len() != ds.n() {
        return Err(Error::DimensionMismatch("weights do not match the dataset".into()));
    }
    let tau = ds.largest_event_time().ok_or(Error::NoEvents)?;
    Ok(GammaProblem {
        x: &ds.x,
        delta: &ds.delta,
        w,
        surv: uncured_survival_at_data(ds, latency, tau),
        init_link,
        lower: bounds.0,
        upper: bounds.1,
        multiplier: cfg.bandwidth_multiplier,
        link_tol: cfg.link_tol,
        link_max_iter: cfg.candidate_link_max_iter,
    })
}

/// `Σ w log φˢ(γᵀx) + (1-w) log(1 - φˢ(γᵀx))` with the link refitted at
/// `(gamma, latency)` and truncated to `[ε′, 1-ε′]`.
pub fn gamma_objective(
    ds: &SurvivalDataset,
    gamma: &[f64],
    latency: &LatencyParams,
    w: &[f64],
    init_link: &dyn Fn(f64) -> f64,
    cfg: &FitConfig,
) -> Result<f64> {
    let bounds = (cfg.epsilon_prime, 1.0 - cfg.epsilon_prime);
    let prob = gamma_problem(ds, latency, w, init_link, bounds, cfg)?;
    let mut p = prob;
    p.link_max_iter = cfg.link_max_iter;
    Ok(p.bernoulli(gamma))
}

/// Squared norm of the score `Σ [w/φ - (1-w)/(1-φ)] x` at the unsmoothed
/// link refitted at `gamma`.
pub fn gamma_score_norm2(
    ds: &SurvivalDataset,
    gamma: &[f64],
    latency: &LatencyParams,
    w: &[f64],
    init_link: &dyn Fn(f64) -> f64,
    cfg: &FitConfig,
) -> Result<f64> {
    let bounds = (cfg.epsilon_prime, 1.0 - cfg.epsilon_prime);
    let mut p = gamma_problem(ds, latency, w, init_link, bounds, cfg)?;
    p.link_max_iter = cfg.link_max_iter;
    Ok(p.score_norm2(gamma))
}

/// Sphere-constrained maximizer with the result projected onto the sphere;
/// falls back to `init` if the projection is not better.
#[derive(Debug, Clone)]
pub struct GammaStep {
    pub gamma: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

fn sphere_search(objective: &dyn Fn(&[f64]) -> f64, init: &[f64], cfg: &FitConfig) -> GammaStep {
    let init = unit(init);
    let f0 = objective(&init);
    if init.len() == 1 {
        let (fp, fm) = (objective(&[1.0]), objective(&[-1.0]));
        let (g, v) = if fp >= fm { (vec![1.0], fp) } else { (vec![-1.0], fm) };
        return GammaStep { gamma: g, value: v, converged: true };
    }
    // Both γ objectives depend on γ only through its direction.
    let opts = AugLagOptions {
        inner: NelderMeadOptions { max_evals: cfg.gamma_max_evals, initial_step: cfg.gamma_initial_step, ..Default::default() },
        max_outer: 10,
        scale_invariant: true,
        ..Default::default()
    };
    let mut f = |g: &[f64]| objective(g);
    let res = maximize_on_sphere(&mut f, &init, &opts);
    let proj = unit(&res.x);
    let fp = objective(&proj);
    if fp >= f0 {
        GammaStep { gamma: proj, value: fp, converged: res.converged }
    } else {
        GammaStep { gamma: init, value: f0, converged: res.converged }
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm2(v);
    if n > 0.0 {
        v.iter().map(|a| a / n).collect()
    } else {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        e
    }
}

/// γ M-step by the augmented Lagrangian method on `‖γ‖² = 1`.
pub fn maximize_gamma_al(
    ds: &SurvivalDataset,
    gamma_init: &[f64],
    latency: &LatencyParams,
    w: &[f64],
    init_link: &dyn Fn(f64) -> f64,
    cfg: &FitConfig,
) -> Result<GammaStep> {
    maximize_gamma_bounded(ds, gamma_init, latency, w, init_link, (cfg.epsilon_prime, 1.0 - cfg.epsilon_prime), cfg)
}

fn maximize_gamma_bounded(
    ds: &SurvivalDataset,
    gamma_init: &[f64],
    latency: &LatencyParams,
    w: &[f64],
    init_link: &dyn Fn(f64) -> f64,
    bounds: (f64, f64),
    cfg: &FitConfig,
) -> Result<GammaStep> {
    check_init(gamma_init, ds)?;
    let prob = gamma_problem(ds, latency, w, init_link, bounds, cfg)?;
    Ok(sphere_search(&|g| prob.bernoulli(g), gamma_init, cfg))
}

/// γ step minimizing the squared score norm at the unsmoothed link.
pub fn maximize_gamma_score(
    ds: &SurvivalDataset,
    gamma_init: &[f64],
    latency: &LatencyParams,
    w: &[f64],
    init_link: &dyn Fn(f64) -> f64,
    cfg: &FitConfig,
) -> Result<GammaStep> {
    score_gamma_bounded(ds, gamma_init, latency, w, init_link, (cfg.epsilon_prime, 1.0 - cfg.epsilon_prime), cfg)
}

fn score_gamma_bounded(
    ds: &SurvivalDataset,
    gamma_init: &[f64],
    latency: &LatencyParams,
    w: &[f64],
    init_link: &dyn Fn(f64) -> f64,
    bounds: (f64, f64),
    cfg: &FitConfig,
) -> Result<GammaStep> {
    check_init(gamma_init, ds)?;
    let prob = gamma_problem(ds, latency, w, init_link, bounds, cfg)?;
    if prob.score_norm2(&unit(gamma_init)) == 0.0 {
        return Ok(GammaStep { gamma: unit(gamma_init), value: 0.0, converged: true });
    }
    let mut step = sphere_search(&|g| -prob.score_norm2(g), gamma_init, cfg);
    step.value = -step.value;
    Ok(step)
}

fn check_init(gamma_init: &[f64], ds: &SurvivalDataset) -> Result<()> {
    if gamma_init.len() != ds.d() {
        return Err(Error::DimensionMismatch("gamma_init does not match x".into()));
    }
    if !(norm2(gamma_init) > 0.0) {
        return Err(Error::InvalidArgument("gamma_init must be nonzero".into()));
    }
    Ok(())
}

/// State recorded at the end of every outer iteration.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub loglik: f64,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// Smallest and largest E-step weight among censored rows.
    pub weight_range: (f64, f64),
    /// Whether every event row had weight exactly 1.
    pub event_weights_one: bool,
    /// Fraction of the proposed step that was accepted (0 when none).
    pub step_fraction: f64,
}

/// Fitted model plus the outer-iteration history.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub params: ModelParams,
    /// Observed log-likelihood at the initial profiled parameters.
    pub initial_loglik: f64,
    pub trace: Vec<IterationRecord>,
    /// True when the run stopped because no ascent step was found.
    pub stalled: bool,
}

impl FitReport {
    /// Observed log-likelihood sequence, starting at the initial parameters.
    pub fn loglik_path(&self) -> Vec<f64> {
        std::iter::once(self.initial_loglik).chain(self.trace.iter().map(|r| r.loglik)).collect()
    }
}

/// Dispatches on the estimator.
pub fn fit(ds: &SurvivalDataset, method: Method, cfg: &FitConfig) -> Result<ModelParams> {
    fit_report(ds, method, cfg).map(|r| r.params)
}

pub fn fit_report(ds: &SurvivalDataset, method: Method, cfg: &FitConfig) -> Result<FitReport> {
    match method {
        Method::Msic => {
            let c = FitConfig { gamma_solver: GammaSolver::AugmentedLagrangian, ..cfg.clone() };
            fit_msic_report(ds, &c)
        }
        Method::MsicScore => {
            let c = FitConfig { gamma_solver: GammaSolver::Score, ..cfg.clone() };
            fit_msic_report(ds, &c)
        }
        Method::Lc => fit_logistic_cox_report(ds, cfg),
    }
}

pub fn fit_msic(ds: &SurvivalDataset, cfg: &FitConfig) -> Result<ModelParams> {
    fit_msic_report(ds, cfg).map(|r| r.params)
}

pub fn fit_logistic_cox(ds: &SurvivalDataset, cfg: &FitConfig) -> Result<ModelParams> {
    fit_logistic_cox_report(ds, cfg).map(|r| r.params)
}

/// Incidence part of the parameter vector.
#[derive(Debug, Clone)]
enum Incidence {
    /// Unit-norm index direction; the link is profiled.
    Index(Vec<f64>),
    /// `(intercept, coefficients...)` of a logistic model.
    Logistic(Vec<f64>),
}

#[derive(Debug, Clone)]
struct State {
    incidence: Incidence,
    latency: LatencyParams,
    link: IncidenceLink,
    p: Vec<f64>,
    loglik: f64,
}

struct Engine<'a> {
    ds: &'a SurvivalDataset,
    ri: RiskIndex,
    cfg: &'a FitConfig,
    bounds: (f64, f64),
    smooth: bool,
}

impl Engine<'_> {
    fn estep(&self, s: &State) -> Vec<f64> {
        let tau = s.latency.last_jump_time();
        (0..self.ds.n())
            .map(|i| {
                let surv = survival_uncured(&s.latency, self.ds.y[i], self.ds.z.row(i), tau);
                estep_weight(self.ds.is_event(i), s.p[i], surv)
            })
            .collect()
    }

    /// Completes a state from `(incidence, latency)`, refitting the link when profiled.
    fn complete(&self, incidence: Incidence, latency: LatencyParams, init_link: &dyn Fn(f64) -> f64) -> Result<State> {
        let (link, p) = match &incidence {
            Incidence::Index(g) => {
                let w = vec![0.0; self.ds.n()];
                let mut prob = gamma_problem(self.ds, &latency, &w, init_link, self.bounds, self.cfg)?;
                prob.link_max_iter = self.cfg.link_max_iter;
                prob.profile(g, self.cfg.link_max_iter, self.smooth)?
            }
            Incidence::Logistic(c) => {
                let p = (0..self.ds.n()).map(|i| logistic(linear_predictor(self.ds.x.row(i), c))).collect();
                let s = norm2(&c[1..]);
                (IncidenceLink::Logistic { intercept: c[0], scale: s }, p)
            }
        };
        let loglik = observed_loglik(self.ds, &p, &latency);
        Ok(State { incidence, latency, link, p, loglik })
    }

    fn latency_step(&self, w: &[f64], beta: &[f64]) -> Result<LatencyParams> {
        let beta = weighted_cox_fit(self.ds, &self.ri, w, beta)?.beta;
        weighted_breslow_with(self.ds, &self.ri, w, &beta)
    }

    fn run(&self, mut state: State) -> Result<FitReport> {
        let initial_loglik = state.loglik;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut stalled = false;
        for _ in 0..self.cfg.outer_max_iter {
            let w = self.estep(&state);
            let cur_link = state.link.clone();
            let init_link = |u: f64| cur_link.evaluate(u);
            let incidence = match &state.incidence {
                Incidence::Index(g) => {
                    let step = match self.cfg.gamma_solver {
                        GammaSolver::AugmentedLagrangian => {
                            maximize_gamma_bounded(self.ds, g, &state.latency, &w, &init_link, self.bounds, self.cfg)?
                        }
                        GammaSolver::Score => {
                            score_gamma_bounded(self.ds, g, &state.latency, &w, &init_link, self.bounds, self.cfg)?
                        }
                    };
                    Incidence::Index(step.gamma)
                }
                Incidence::Logistic(c) => match fit_logistic(&self.ds.x, &w, Some(c)) {
                    Ok(f) => Incidence::Logistic(f.coef),
                    Err(Error::LogisticDivergence) => {
                        log::warn!("weighted logistic step diverged; stopping");
                        break;
                    }
                    Err(e) => return Err(e),
                },
            };
            let latency = self.latency_step(&w, &state.latency.beta)?;
            let proposal = self.complete(incidence, latency, &init_link)?;

            let mut accepted = None;
            let mut t = 1.0;
            for k in 0..=MAX_BACKTRACK {
                let cand = if k == 0 { proposal.clone() } else { self.interpolate(&state, &proposal, t, &init_link)? };
                if cand.loglik >= state.loglik {
                    accepted = Some(cand);
                    break;
                }
                t *= 0.5;
            }
            let (weight_range, event_weights_one) = weight_summary(self.ds, &w);
            let Some(next) = accepted else {
                log::debug!("no ascent step found; stopping at loglik {}", state.loglik);
                trace.push(self.record(&state, weight_range, event_weights_one, 0.0));
                stalled = true;
                break;
            };
            let change = parameter_change(&state, &next);
            state = next;
            trace.push(self.record(&state, weight_range, event_weights_one, t));
            if change < self.cfg.outer_tol {
                converged = true;
                break;
            }
        }
        if trace.is_empty() {
            let w = self.estep(&state);
            let (r, e) = weight_summary(self.ds, &w);
            trace.push(self.record(&state, r, e, 0.0));
        }
        let (gamma, gamma_raw) = match &state.incidence {
            Incidence::Index(g) => (IndexCoefficients::normalized(g)?, None),
            Incidence::Logistic(c) => (IndexCoefficients::normalized(&unit(&c[1..]))?, Some(c.clone())),
        };
        let params = ModelParams {
            gamma,
            latency: state.latency,
            link: state.link,
            loglik: state.loglik,
            iterations: trace.len(),
            converged: converged || stalled,
            gamma_raw,
        };
        Ok(FitReport { params, initial_loglik, trace, stalled })
    }

    fn record(&self, s: &State, weight_range: (f64, f64), event_weights_one: bool, t: f64) -> IterationRecord {
        let gamma = match &s.incidence {
            Incidence::Index(g) => g.clone(),
            Incidence::Logistic(c) => c.clone(),
        };
        IterationRecord {
            loglik: s.loglik,
            gamma,
            beta: s.latency.beta.clone(),
            weight_range,
            event_weights_one,
            step_fraction: t,
        }
    }

    /// `(1-t)·old + t·new` in every parameter block, re-normalizing γ.
    fn interpolate(&self, old: &State, new: &State, t: f64, init_link: &dyn Fn(f64) -> f64) -> Result<State> {
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect() };
        let incidence = match (&old.incidence, &new.incidence) {
            (Incidence::Index(a), Incidence::Index(b)) => Incidence::Index(unit(&mix(a, b))),
            (Incidence::Logistic(a), Incidence::Logistic(b)) => Incidence::Logistic(mix(a, b)),
            _ => unreachable!("incidence kind is fixed within a fit"),
        };
        let beta = mix(&old.latency.beta, &new.latency.beta);
        let steps = old
            .latency
            .lambda_steps
            .iter()
            .zip(&new.latency.lambda_steps)
            .map(|(&(s, a), &(_, b))| (s, (1.0 - t) * a + t * b))
            .collect();
        self.complete(incidence, LatencyParams::new(beta, steps)?, init_link)
    }
}

fn weight_summary(ds: &SurvivalDataset, w: &[f64]) -> ((f64, f64), bool) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut ones = true;
    for (i, &wi) in w.iter().enumerate() {
        if ds.is_event(i) {
            ones &= wi == 1.0;
        } else {
            lo = lo.min(wi);
            hi = hi.max(wi);
        }
    }
    ((lo, hi), ones)
}

/// `max(‖Δγ‖, ‖Δβ‖, sup|ΔΛ|)`; both Λ's jump at the same event times.
fn parameter_change(a: &State, b: &State) -> f64 {
    let diff = |x: &[f64], y: &[f64]| norm2(&x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>());
    let dg = match (&a.incidence, &b.incidence) {
        (Incidence::Index(x), Incidence::Index(y)) | (Incidence::Logistic(x), Incidence::Logistic(y)) => diff(x, y),
        _ => f64::INFINITY,
    };
    let db = diff(&a.latency.beta, &b.latency.beta);
    let dl = a
        .latency
        .lambda_steps
        .iter()
        .zip(&b.latency.lambda_steps)
        .map(|(p, q)| (p.1 - q.1).abs())
        .fold(0.0, f64::max);
    dg.max(db).max(dl)
}

fn engine<'a>(ds: &'a SurvivalDataset, cfg: &'a FitConfig, smooth: bool) -> Result<Engine<'a>> {
    cfg.validate()?;
    Ok(Engine {
        ds,
        ri: RiskIndex::new(ds),
        cfg,
        bounds: (cfg.epsilon_prime, 1.0 - cfg.epsilon_prime),
        smooth,
    })
}

/// Smoothed link refitted at `(gamma, latency)` starting from `init_link`,
/// with the observed log-likelihood it attains.
pub fn profile_loglik(
    ds: &SurvivalDataset,
    gamma: &[f64],
    latency: &LatencyParams,
    init_link: &dyn Fn(f64) -> f64,
    cfg: &FitConfig,
) -> Result<(IncidenceLink, f64)> {
    let eng = engine(ds, cfg, cfg.gamma_solver == GammaSolver::AugmentedLagrangian)?;
    let s = eng.complete(Incidence::Index(unit(gamma)), latency.clone(), init_link)?;
    Ok((s.link, s.loglik))
}

/// Monotone single-index fit with the full iteration history.
pub fn fit_msic_report(ds: &SurvivalDataset, cfg: &FitConfig) -> Result<FitReport> {
    let init = initialize(ds)?;
    let smooth = cfg.gamma_solver == GammaSolver::AugmentedLagrangian;
    let mut eng = engine(ds, cfg, smooth)?;
    let link0 = init.link.clone();
    let init_link = |u: f64| link0.evaluate(u);
    if cfg.use_cv_truncation {
        let grid = default_mu_grid(ds.n());
        let folds = cfg.cv_folds.min(ds.n());
        let choice = select_truncation_cv(ds, &init.gamma, &init.latency, &init_link, &grid, folds, cfg.epsilon_prime)?;
        log::debug!("cross-validated truncation [{}, {}] at mu = {}", choice.lower, choice.upper, choice.mu);
        eng.bounds = (choice.lower, choice.upper);
    }
    let state = eng.complete(Incidence::Index(init.gamma.as_slice().to_vec()), init.latency, &init_link)?;
    eng.run(state)
}

/// Logistic incidence with Cox latency, fitted by the same EM.
pub fn fit_logistic_cox_report(ds: &SurvivalDataset, cfg: &FitConfig) -> Result<FitReport> {
    let init = initialize(ds)?;
    let eng = engine(ds, cfg, false)?;
    let coef = init.logistic_coef.clone().unwrap_or_else(|| {
        let mut c = vec![0.0; ds.d() + 1];
        c[1] = 1.0;
        c
    });
    let none = |_: f64| 0.5;
    let state = eng.complete(Incidence::Logistic(coef), init.latency, &none)?;
    eng.run(state)
}
