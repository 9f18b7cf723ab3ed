//! Naive row-resampling bootstrap with percentile intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::fit::{fit, FitConfig, Method};

/// Largest tolerated fraction of failed refits.
const MAX_FAILURE_RATE: f64 = 0.2;

type Refit = (Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapCi {
    pub level: f64,
    pub gamma: Vec<(f64, f64)>,
    pub beta: Vec<(f64, f64)>,
    pub failed: usize,
    pub total: usize,
}

/// Draws `b` resamples of the rows (resample `k` uses substream `k` of
/// `cfg.seed`), refits each and returns per-coordinate percentile intervals
/// for γ and β. Failed refits are skipped and counted.
pub fn bootstrap_ci(ds: &SurvivalDataset, method: Method, cfg: &FitConfig, b: usize, level: f64) -> Result<BootstrapCi> {
    if b < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 resamples".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument("level must lie in (0, 1)".into()));
    }
    let n = ds.n();
    let fits: Vec<Option<Refit>> = (0..b as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            match fit(&ds.select_rows(&idx), method, cfg) {
                Ok(p) => Some((p.gamma.as_slice().to_vec(), p.latency.beta)),
                Err(e) => {
                    log::debug!("bootstrap refit {k} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let ok: Vec<&Refit> = fits.iter().flatten().collect();
    let failed = b - ok.len();
    if failed as f64 > MAX_FAILURE_RATE * b as f64 || ok.len() < 2 {
        return Err(Error::UnstableBootstrap { failed, total: b });
    }
    let alpha = 1.0 - level;
    let column = |get: &dyn Fn(&Refit) -> f64| -> (f64, f64) {
        let mut v: Vec<f64> = ok.iter().map(|r| get(r)).collect();
        v.sort_by(f64::total_cmp);
        percentile_interval(&v, alpha)
    };
    let gamma = (0..ds.d()).map(|j| column(&|r| r.0[j])).collect();
    let beta = (0..ds.q()).map(|j| column(&|r| r.1[j])).collect();
    Ok(BootstrapCi { level, gamma, beta, failed, total: b })
}

/// Order statistics at ranks `⌊(α/2)(B-1)⌋` and `⌈(1-α/2)(B-1)⌉` of sorted `v`.
pub fn percentile_interval(sorted: &[f64], alpha: f64) -> (f64, f64) {
    let last = (sorted.len() - 1) as f64;
    let lo = ((alpha / 2.0) * last).floor() as usize;
    let hi = (((1.0 - alpha / 2.0) * last).ceil() as usize).min(sorted.len() - 1);
    (sorted[lo], sorted[hi])
}
