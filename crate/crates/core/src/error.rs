use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor shape or model configuration does not fit the operation.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called in a state it does not support.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A training loss became NaN or infinite.
    #[error("non-finite loss term `{term}` = {value}")]
    NonFinite { term: String, value: f64 },

    #[error("checkpoint {path}: bad magic {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("checkpoint {path}: unsupported version {found} (expected {expected})")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },

    #[error("checkpoint {path}: truncated file ({context})")]
    Truncated { path: PathBuf, context: String },

    /// A named parameter is missing, unexpected, or has the wrong shape.
    #[error("parameter `{name}`: {reason}")]
    ParamMismatch { name: String, reason: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("scheduler: {0}")]
    Scheduler(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File { path: path.into(), source }
    }
}
