use std::path::PathBuf;

/// Errors produced across the localization pipeline.
#[derive(Debug, thiserror::Error)]
pub enum KpiError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient data: need at least {needed} points, got {actual}")]
    InsufficientData { needed: usize, actual: usize },

    #[error("invalid series data: {0}")]
    InvalidData(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl KpiError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        KpiError::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KpiError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, KpiError>;
