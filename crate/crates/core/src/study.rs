//! Monte Carlo replication studies: generate, fit, score, summarize.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{fit, FitConfig, Method};
use crate::metrics::{coef_bias_variance, mean, mse_cure_grid, sample_variance, TrueIncidence};
use crate::simgen::{generate_stream, ExperimentSpec};

/// Largest tolerated fraction of failed replications per method.
pub const MAX_FAILURE_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    /// Label written to the `expt` column.
    pub label: String,
    pub spec: ExperimentSpec,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub mse: f64,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub replication: usize,
    pub method: Method,
    pub outcome: std::result::Result<Outcome, String>,
}

/// One summary row per method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub expt: String,
    pub size: usize,
    pub lambda_c: f64,
    pub method: String,
    pub mse_mean: f64,
    pub mse_variance: f64,
    pub gamma_bias: f64,
    pub gamma_variance: f64,
    pub beta_bias: f64,
    pub beta_variance: f64,
    #[serde(skip)]
    pub failed: usize,
    #[serde(skip)]
    pub total: usize,
}

impl Study {
    pub fn truth(&self) -> TrueIncidence {
        TrueIncidence { link: self.spec.link, intercept: self.spec.intercept, gamma0: self.spec.gamma0.clone() }
    }

    /// Runs every replication on the current rayon pool. Replication `r`
    /// draws its data from substream `r` of the spec seed, so the output
    /// does not depend on the number of workers.
    pub fn run(&self) -> Result<Vec<Record>> {
        self.spec.validate()?;
        self.fit.validate()?;
        if self.replications == 0 || self.methods.is_empty() {
            return Err(Error::InvalidArgument("need at least one replication and one method".into()));
        }
        let truth = self.truth();
        let per_rep: Vec<Vec<Record>> = (0..self.replications)
            .into_par_iter()
            .map(|r| {
                let data = generate_stream(&self.spec, r as u64);
                let cfg = FitConfig { seed: self.fit.seed.wrapping_add(r as u64), ..self.fit.clone() };
                let recs = self
                    .methods
                    .iter()
                    .map(|&method| {
                        let outcome = data
                            .as_ref()
                            .map_err(|e| e.to_string())
                            .and_then(|g| fit(&g.dataset, method, &cfg).map_err(|e| e.to_string()))
                            .and_then(|p| {
                                let mse = mse_cure_grid(&p, &truth).map_err(|e| e.to_string())?;
                                Ok(Outcome {
                                    mse,
                                    gamma: p.gamma.as_slice().to_vec(),
                                    beta: p.latency.beta.clone(),
                                    loglik: p.loglik,
                                    iterations: p.iterations,
                                    converged: p.converged,
                                })
                            });
                        if let Err(e) = &outcome {
                            log::warn!("replication {r} ({method}) failed: {e}");
                        }
                        Record { replication: r, method, outcome }
                    })
                    .collect();
                log::info!("replication {} of {} done", r + 1, self.replications);
                recs
            })
            .collect();
        Ok(per_rep.into_iter().flatten().collect())
    }

    /// Aggregates records into one row per method, in `self.methods` order.
    pub fn summarize(&self, records: &[Record]) -> Vec<SummaryRow> {
        self.methods
            .iter()
            .map(|&method| {
                let ok: Vec<&Outcome> =
                    records.iter().filter(|r| r.method == method).filter_map(|r| r.outcome.as_ref().ok()).collect();
                let total = records.iter().filter(|r| r.method == method).count();
                let mses: Vec<f64> = ok.iter().map(|o| o.mse).collect();
                let gammas: Vec<Vec<f64>> = ok.iter().map(|o| o.gamma.clone()).collect();
                let betas: Vec<Vec<f64>> = ok.iter().map(|o| o.beta.clone()).collect();
                let (gb, gv) = coef_bias_variance(&gammas, &self.spec.gamma0).unwrap_or((f64::NAN, f64::NAN));
                let (bb, bv) = coef_bias_variance(&betas, &self.spec.beta0).unwrap_or((f64::NAN, f64::NAN));
                SummaryRow {
                    expt: self.label.clone(),
                    size: self.spec.n,
                    lambda_c: self.spec.censor_rate,
                    method: method.to_string(),
                    mse_mean: if mses.is_empty() { f64::NAN } else { mean(&mses) },
                    mse_variance: sample_variance(&mses),
                    gamma_bias: gb,
                    gamma_variance: gv,
                    beta_bias: bb,
                    beta_variance: bv,
                    failed: total - ok.len(),
                    total,
                }
            })
            .collect()
    }
}

/// Errors when any method failed on more than [`MAX_FAILURE_RATE`] of its replications.
pub fn check_failures(rows: &[SummaryRow]) -> Result<()> {
    for row in rows {
        if row.failed as f64 > MAX_FAILURE_RATE * row.total as f64 {
            return Err(Error::ReplicationFailures { failed: row.failed, total: row.total });
        }
    }
    Ok(())
}

/// Runs `f` on a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke() -> Study {
        let mut spec = ExperimentSpec::preset("exptA").unwrap();
        spec.n = 100;
        spec.seed = 3;
        Study { label: "exptA".into(), spec, methods: vec![Method::Lc, Method::Msic], replications: 4, fit: FitConfig::default() }
    }

    #[test]
    fn bookkeeping_and_worker_independence() {
        let s = smoke();
        let a = with_workers(1, || s.run()).unwrap().unwrap();
        assert_eq!(a.len(), 8);
        for m in &s.methods {
            assert_eq!(a.iter().filter(|r| r.method == *m).count(), 4);
        }
        let rows = s.summarize(&a);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, "lc");
        assert!(rows.iter().all(|r| r.total == 4 && r.mse_mean.is_finite()));
        let b = with_workers(3, || s.run()).unwrap().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failure_threshold() {
        let row = |failed| SummaryRow {
            expt: String::new(),
            size: 0,
            lambda_c: 0.0,
            method: String::new(),
            mse_mean: 0.0,
            mse_variance: 0.0,
            gamma_bias: 0.0,
            gamma_variance: 0.0,
            beta_bias: 0.0,
            beta_variance: 0.0,
            failed,
            total: 20,
        };
        assert!(check_failures(&[row(2)]).is_ok());
        assert!(matches!(check_failures(&[row(3)]), Err(Error::ReplicationFailures { failed: 3, total: 20 })));
    }
}
