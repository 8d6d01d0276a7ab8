use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance is not positive semi-definite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("unknown metric id `{0}`")]
    UnknownMetric(String),

    #[error("invalid bounds for {metric}: {reason}")]
    InvalidBounds { metric: String, reason: String },

    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("run {run_key} failed: {message}")]
    RunFailed { run_key: String, message: String },

    #[error("run {run_key} incomplete: {message}")]
    IncompleteRun { run_key: String, message: String },

    #[error("precomputed store does not cover {} id(s): {}", .missing.len(), preview(.missing))]
    Coverage { missing: Vec<String> },

    #[error("download failed for {url}: {message}")]
    Download { url: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Whether the failure stems from bad user input rather than from the
    /// environment. The CLI maps these to exit code 1 and everything else to 2.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::RunFailed { .. } | Error::Download { .. }
        )
    }
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 20;
    let mut out = ids
        .iter()
        .take(SHOWN)
        .cloned()
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > SHOWN {
        out.push_str(&format!(", ... ({} more)", ids.len() - SHOWN));
    }
    out
}
