use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimators, samplers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid proposal: {0}")]
    Proposal(String),

    #[error("degenerate proposal: {0}")]
    DegenerateProposal(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("enumeration too large: {0}")]
    Resource(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
