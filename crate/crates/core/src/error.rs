use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: unknown {field} token `{token}`")]
    Schema {
        path: PathBuf,
        line: u64,
        field: &'static str,
        token: String,
    },

    #[error("name `{0}` is not present in the reference distribution")]
    MissingName(String),

    #[error("reference count for `{name}` would fall below zero ({available} available, {requested} to remove)")]
    DataInconsistency {
        name: String,
        available: u64,
        requested: u64,
    },

    #[error("infeasible binning: {0}")]
    InfeasibleBinning(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("fraction undefined: {0}")]
    UndefinedFraction(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Infeasible configurations (as opposed to bad input data).
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::InfeasibleBinning(_) | Error::Domain(_))
    }
}
