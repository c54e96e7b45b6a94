use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{0} has not been trained")]
    Untrained(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite loss at step {step} (sample `{sample_id}`)")]
    NonFinite { step: usize, sample_id: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True when the root cause is a numeric failure rather than bad data.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. } => true,
            Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
