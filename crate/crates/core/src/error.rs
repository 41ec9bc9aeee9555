use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the retrieval engine.
///
/// Variants are grouped so that front ends can map them onto exit codes:
/// [`Error::is_adapter`] marks failures of model adapters or remote services,
/// everything else is a data or input error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("empty collection: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding failed for passage `{id}`: {reason}")]
    Embedding { id: String, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("query `{0}` has no relevance judgment")]
    MissingJudgment(String),

    #[error("unsupported index format: {0}")]
    Format(String),

    #[error("adapter error: {0}")]
    Adapter(#[from] crate::genpipeline::AdapterError),

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

    pub fn is_adapter(&self) -> bool {
        matches!(self, Error::Adapter(_))
    }
}
