use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {p} is not a power of two")]
    Sizing { p: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("solver became unstable at step {step} (t = {time:.6})")]
    Stability { step: usize, time: f64 },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("risk is undefined on an empty data set")]
    EmptyData,

    #[error("division by zero: {0}")]
    Division(String),

    #[error(
        "feature table needs {needed} bytes which exceeds the {budget} byte budget; use streaming mode"
    )]
    Capacity { needed: usize, budget: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("vector has mass {mass:.3e} on the null space of the operator")]
    Support { mass: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sample-size gates not met: need M >= {m_min} and N >= {n_min}, got M = {m}, N = {n}")]
    GatesUnsatisfied {
        m_min: u64,
        n_min: u64,
        m: usize,
        n: usize,
    },

    #[error("{failed} of {total} sweep cells failed")]
    CellFailures { failed: usize, total: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the CLI: 1 config, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidValue(_) | Error::GatesUnsatisfied { .. } => 1,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::Sample { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
