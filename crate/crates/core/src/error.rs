//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by validation, estimation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("negative time at row {0}")]
    NegativeTime(usize),
    #[error("non-binary indicator at row {0}")]
    NonBinaryIndicator(usize),
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty problem")]
    EmptyProblem,
    #[error("degenerate index range")]
    DegenerateIndexRange,
    #[error("collinear latency covariates")]
    CollinearLatency,
    #[error("partial likelihood unbounded")]
    PartialLikelihoodUnbounded,
    #[error("empty weighted risk set")]
    EmptyRiskSet,
    #[error("no censored observations")]
    NoCensored,
    #[error("no observed events")]
    NoEvents,
    #[error("logistic regression diverged")]
    LogisticDivergence,
    #[error("unstable bootstrap: {failed} of {total} refits failed")]
    UnstableBootstrap { failed: usize, total: usize },
    #[error("too many failed replications: {failed} of {total}")]
    ReplicationFailures { failed: usize, total: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 1,
            Error::DimensionMismatch(_)
            | Error::NegativeTime(_)
            | Error::NonBinaryIndicator(_)
            | Error::NonFinite { .. }
            | Error::NoCensored
            | Error::NoEvents
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Io(_) => 2,
            Error::EmptyProblem
            | Error::DegenerateIndexRange
            | Error::CollinearLatency
            | Error::PartialLikelihoodUnbounded
            | Error::EmptyRiskSet
            | Error::LogisticDivergence
            | Error::UnstableBootstrap { .. }
            | Error::ReplicationFailures { .. } => 3,
        }
    }
}
