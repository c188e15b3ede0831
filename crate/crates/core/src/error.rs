use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {message}")]
    Codec { path: PathBuf, message: String },

    #[error("scorer unavailable at {endpoint}: {reason}")]
    ScorerUnavailable { endpoint: String, reason: String },

    #[error("scorer protocol error: {0}")]
    Protocol(String),

    #[error("fixture has no entry for patch ({row},{col})")]
    FixtureIncomplete { row: usize, col: usize },

    #[error("patch ({row},{col}): {source}")]
    AtPatch {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("metric '{0}' is not available in this build")]
    Unsupported(&'static str),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips patch annotations to expose the underlying cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtPatch { source, .. } => source.root(),
            other => other,
        }
    }
}
