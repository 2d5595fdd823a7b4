use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across model evaluation, reduction, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value at index {index} during {context}")]
    NonFinite { index: usize, context: String },

    #[error("solver failure at iteration {iteration}: {message}")]
    Solver { iteration: usize, message: String },

    #[error("invalid configuration for `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("reduction failed: {0}")]
    Reduction(String),

    #[error("state diverged at t = {time}")]
    Divergence { time: f64, last_finite: Vec<f64> },

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short category name, used by the CLI for diagnostics and exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract",
            Error::NonFinite { .. } => "numerical",
            Error::Solver { .. } => "solver",
            Error::Config { .. } => "config",
            Error::Reduction(_) => "reduction",
            Error::Divergence { .. } => "divergence",
            Error::Consistency(_) => "consistency",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
