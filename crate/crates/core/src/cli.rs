//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bootstrap::bootstrap_ci;
use crate::config::Config;
use crate::data::{IncidenceLink, ModelParams};
use crate::error::{Error, Result};
use crate::fit::{fit, Method};
use crate::io::{read_dataset, write_dataset, write_truth};
use crate::metrics::{mse_cure_grid, prediction_error_with, TrueIncidence};
use crate::simgen::{generate, summarize};
use crate::study::{check_failures, with_workers, Record, Study, SummaryRow};

pub const MODEL_FORMAT: &str = "msic-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "msic", version, about = "Monotone single-index mixture cure model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one dataset: writes data.csv, truth.csv and summary.json into --out.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a model to a CSV dataset and write the JSON model file.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo study: summary CSV at --out, per-replication rows beside it.
    Replicate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Mean grid MSE for each bandwidth multiplier in study.multipliers.
    BwSensitivity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Percentile bootstrap intervals for the coefficients.
    Bootstrap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Prediction error of a saved model on a dataset, plus grid MSE when
    /// the config declares the true design.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Saved model: parameters plus enough context to reproduce the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub method: Method,
    /// Bandwidth of a smoothed link, else `null`.
    pub bandwidth: Option<f64>,
    pub params: ModelParams,
    pub config: Config,
}

impl ModelFile {
    pub fn new(method: Method, params: ModelParams, config: Config) -> Self {
        let bandwidth = match &params.link {
            IncidenceLink::Smoothed(s) => Some(s.bandwidth()),
            _ => None,
        };
        Self { format: MODEL_FORMAT.into(), version: MODEL_VERSION, method, bandwidth, params, config }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::InvalidArgument(format!(
                "{} is not a version {MODEL_VERSION} model file",
                path.display()
            )));
        }
        Ok(m)
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => cmd_simulate(&config, &out, seed),
        Command::Fit { config, data, out, method, seed } => cmd_fit(&config, &data, &out, method, seed),
        Command::Replicate { config, out, workers, seed, method } => {
            cmd_replicate(&config, &out, workers, seed, method)
        }
        Command::BwSensitivity { config, out, workers, seed, method } => {
            cmd_bw_sensitivity(&config, &out, workers, seed, method)
        }
        Command::Bootstrap { config, data, out, method, workers, seed } => {
            cmd_bootstrap(&config, &data, &out, method, workers, seed)
        }
        Command::Evaluate { config, model, data, out } => cmd_evaluate(&config, &model, &data, &out),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn cmd_simulate(config: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = Config::load(config)?;
    let mut spec = cfg.experiment()?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let g = generate(&spec)?;
    std::fs::create_dir_all(out_dir)?;
    write_dataset(&out_dir.join("data.csv"), &g.dataset, false)?;
    write_truth(&out_dir.join("truth.csv"), &g)?;
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summarize(&g))?)?;
    Ok(())
}

fn resolve_method(cli: Option<Method>, cfg: &Config) -> Method {
    cli.or(cfg.method).unwrap_or(Method::Msic)
}

pub fn cmd_fit(config: &Path, data: &Path, out: &Path, method: Option<Method>, seed: Option<u64>) -> Result<()> {
    let mut cfg = Config::load(config)?;
    if let Some(s) = seed {
        cfg.fit.seed = s;
    }
    let method = resolve_method(method, &cfg);
    let ds = read_dataset(data, cfg.latency_columns().as_deref())?;
    let params = fit(&ds, method, &cfg.fit)?;
    if !params.converged {
        log::warn!("fit stopped at the iteration cap without converging");
    }
    create_parent(out)?;
    cfg.method = Some(method);
    ModelFile::new(method, params, cfg).save(out)
}

fn study_from(cfg: &Config, seed: Option<u64>, method: Option<Method>) -> Result<Study> {
    let mut spec = cfg.experiment()?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let label = cfg.experiment.as_ref().and_then(|e| e.preset.clone()).unwrap_or_else(|| format!("link{}", spec.link));
    Ok(Study {
        label,
        spec,
        methods: method.map(|m| vec![m]).unwrap_or_else(|| cfg.study.methods.clone()),
        replications: cfg.study.replications,
        fit: cfg.fit.clone(),
    })
}

/// `<stem>_raw.csv` beside `out`.
pub fn raw_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}_raw.csv"))
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_raw(path: &Path, records: &[Record], d: usize, q: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> =
        ["replication", "method", "status", "mse", "loglik", "iterations", "converged"].map(String::from).to_vec();
    header.extend((1..=d).map(|j| format!("gamma{j}")));
    header.extend((1..=q).map(|j| format!("beta{j}")));
    header.push("error".into());
    w.write_record(&header)?;
    for r in records {
        let mut rec = vec![r.replication.to_string(), r.method.to_string()];
        match &r.outcome {
            Ok(o) => {
                rec.extend(["ok".into(), o.mse.to_string(), o.loglik.to_string(), o.iterations.to_string()]);
                rec.push(o.converged.to_string());
                rec.extend(o.gamma.iter().chain(&o.beta).map(f64::to_string));
                rec.push(String::new());
            }
            Err(e) => {
                rec.push("failed".into());
                rec.extend(std::iter::repeat_n(String::new(), 4 + d + q));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_replicate(
    config: &Path,
    out: &Path,
    workers: Option<usize>,
    seed: Option<u64>,
    method: Option<Method>,
) -> Result<()> {
    let cfg = Config::load(config)?;
    let study = study_from(&cfg, seed, method)?;
    let records = with_workers(workers.unwrap_or(cfg.study.workers), || study.run())??;
    let rows = study.summarize(&records);
    create_parent(out)?;
    write_summary(out, &rows)?;
    write_raw(&raw_path(out), &records, study.spec.gamma0.len(), study.spec.beta0.len())?;
    check_failures(&rows)
}

#[derive(Debug, Serialize)]
struct BwRow {
    m: f64,
    mse_mean: f64,
}

pub fn cmd_bw_sensitivity(
    config: &Path,
    out: &Path,
    workers: Option<usize>,
    seed: Option<u64>,
    method: Option<Method>,
) -> Result<()> {
    let cfg = Config::load(config)?;
    let mut study = study_from(&cfg, seed, Some(method.unwrap_or(Method::Msic)))?;
    let mut ms = cfg.study.multipliers.clone();
    if ms.is_empty() || ms.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::Config("study.multipliers must be a nonempty list of positive values".into()));
    }
    ms.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for m in ms {
        study.fit.bandwidth_multiplier = m;
        let records = with_workers(workers.unwrap_or(cfg.study.workers), || study.run())??;
        let summary = study.summarize(&records);
        rows.push(BwRow { m, mse_mean: summary[0].mse_mean });
        failures.extend(summary);
    }
    create_parent(out)?;
    let mut w = csv::Writer::from_path(out)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    check_failures(&failures)
}

pub fn cmd_bootstrap(
    config: &Path,
    data: &Path,
    out: &Path,
    method: Option<Method>,
    workers: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = Config::load(config)?;
    if let Some(s) = seed {
        cfg.fit.seed = s;
    }
    let method = resolve_method(method, &cfg);
    let ds = read_dataset(data, cfg.latency_columns().as_deref())?;
    let ci = with_workers(workers.unwrap_or(cfg.study.workers), || {
        bootstrap_ci(&ds, method, &cfg.fit, cfg.bootstrap.resamples, cfg.bootstrap.level)
    })??;
    create_parent(out)?;
    std::fs::write(out, serde_json::to_string_pretty(&ci)?)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Evaluation {
    n: usize,
    prediction_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mse_grid: Option<f64>,
}

pub fn cmd_evaluate(config: &Path, model: &Path, data: &Path, out: &Path) -> Result<()> {
    let cfg = Config::load(config)?;
    let model = ModelFile::load(model)?;
    let ds = read_dataset(data, cfg.latency_columns().as_deref())?;
    let pe = prediction_error_with(&model.params, &ds, cfg.evaluate.pe_orientation)?;
    let mse_grid = match &cfg.experiment {
        Some(_) => {
            let s = cfg.experiment()?;
            let truth = TrueIncidence { link: s.link, intercept: s.intercept, gamma0: s.gamma0 };
            Some(mse_cure_grid(&model.params, &truth)?)
        }
        None => None,
    };
    create_parent(out)?;
    std::fs::write(out, serde_json::to_string_pretty(&Evaluation { n: ds.n(), prediction_error: pe, mse_grid })?)?;
    Ok(())
}
