use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
///
/// `Usage` covers contract violations by the caller, `Ingest` covers
/// malformed or unsupported input files, and the remaining variants are
/// analysis outcomes that callers usually treat as "skip this cluster".
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}: {msg}")]
    Ingest { path: PathBuf, msg: String },

    #[error("invalid JSON at {path}: {msg}")]
    Schema { path: String, msg: String },

    #[error("message {id}: {msg}")]
    OutOfRange { id: u64, msg: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no significant principal component")]
    NoSignal,

    #[error("eps estimation: {0}")]
    Estimation(String),

    #[error("invalid protocol spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn ingest(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Ingest {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
