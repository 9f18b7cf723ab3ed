//! Monotone single-index mixture cure model: isotonic link estimation,
//! EM fitting with a Cox latency, simulation designs and evaluation metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod fit;
pub mod io;
pub mod isotonic;
pub mod latency;
pub mod link_em;
pub mod logistic;
pub mod metrics;
pub mod optim;
pub mod simgen;
pub mod smoothing;
pub mod study;

pub use data::{
    IncidenceLink, IndexCoefficients, Kernel, LatencyParams, Matrix, ModelParams, MonotoneStepLink, SmoothedLink,
    SurvivalDataset,
};
pub use error::{Error, Result};
pub use fit::{fit, fit_logistic_cox, fit_msic, FitConfig, GammaSolver, Method};
