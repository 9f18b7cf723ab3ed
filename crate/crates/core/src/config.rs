//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//! method = "msic"            # fit / bootstrap; msic, msic-score or lc
//!
//! [experiment]               # preset plus optional overrides
//! preset = "exptA"
//! n = 250
//! censor_rate = 0.1
//! seed = 2024
//!
//! [fit]                      # any FitConfig field
//! bandwidth_multiplier = 1.0
//!
//! [study]
//! methods = ["msic", "lc"]
//! replications = 100
//! workers = 4
//! multipliers = [0.25, 0.5, 1.0, 2.0]
//!
//! [bootstrap]
//! resamples = 200
//! level = 0.95
//!
//! [data]
//! latency_columns = ["x1", "x4"]
//!
//! [evaluate]
//! pe_orientation = "as_printed"
//! ```
//!
//! Without a preset, `link`, `intercept`, `gamma0`, `beta0`, `censor_rate`
//! and `n` must all be given.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitConfig, Method};
use crate::metrics::PeOrientation;
use crate::simgen::{ExperimentSpec, LinkId};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub preset: Option<String>,
    pub link: Option<LinkId>,
    pub intercept: Option<f64>,
    pub gamma0: Option<Vec<f64>>,
    pub beta0: Option<Vec<f64>>,
    pub weibull_lambda: Option<f64>,
    pub weibull_shape: Option<f64>,
    pub censor_rate: Option<f64>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub methods: Vec<Method>,
    pub replications: usize,
    pub workers: usize,
    pub multipliers: Vec<f64>,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            methods: vec![Method::Msic],
            replications: 100,
            workers: 1,
            multipliers: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub resamples: usize,
    pub level: f64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self { resamples: 200, level: 0.95 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Columns forming the latency block. Defaults to the simulation
    /// mapping `x1, x4` when an experiment is declared, else `z1..zq`.
    pub latency_columns: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub pe_orientation: PeOrientation,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.fit.validate()?;
        if let Some(e) = &cfg.experiment {
            e.resolve()?;
        }
        if cfg.study.workers == 0 {
            return Err(Error::Config("study.workers must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn experiment(&self) -> Result<ExperimentSpec> {
        self.experiment.as_ref().ok_or_else(|| Error::Config("missing [experiment] section".into()))?.resolve()
    }

    pub fn latency_columns(&self) -> Option<Vec<String>> {
        self.data
            .latency_columns
            .clone()
            .or_else(|| self.experiment.as_ref().map(|_| vec!["x1".to_string(), "x4".to_string()]))
    }
}

impl ExperimentSection {
    pub fn resolve(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.preset {
            Some(p) => ExperimentSpec::preset(p).map_err(|_| Error::Config(format!("experiment.preset: unknown preset {p:?}")))?,
            None => {
                let need = |name: &str| Error::Config(format!("experiment.{name} is required without a preset"));
                ExperimentSpec {
                    link: self.link.ok_or_else(|| need("link"))?,
                    intercept: self.intercept.ok_or_else(|| need("intercept"))?,
                    gamma0: self.gamma0.clone().ok_or_else(|| need("gamma0"))?,
                    beta0: self.beta0.clone().ok_or_else(|| need("beta0"))?,
                    weibull_lambda: 1.5,
                    weibull_shape: 2.2,
                    censor_rate: self.censor_rate.ok_or_else(|| need("censor_rate"))?,
                    n: self.n.ok_or_else(|| need("n"))?,
                    seed: 0,
                }
            }
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { spec.$f = v; } )* };
        }
        set!(link, intercept, gamma0, beta0, weibull_lambda, weibull_shape, censor_rate, n, seed);
        spec.validate().map_err(|e| Error::Config(format!("experiment: {e}")))?;
        Ok(spec)
    }
}
