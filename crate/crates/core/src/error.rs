use std::path::PathBuf;

use crate::a2i::backend::BackendError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("all {rows} rows failed to parse; first error at line {first_line}: {first_message}")]
    AllRowsFailed {
        rows: usize,
        first_line: usize,
        first_message: String,
    },

    #[error(transparent)]
    ResponseParse(#[from] ResponseParseError),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// An LLM answer that could not be turned into the expected structure.
/// Carries the raw text so it can be logged or retried.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message} (raw response: {raw:?})")]
pub struct ResponseParseError {
    pub message: String,
    pub raw: String,
}

impl ResponseParseError {
    pub fn new(message: impl Into<String>, raw: &str) -> Self {
        ResponseParseError {
            message: message.into(),
            raw: raw.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
