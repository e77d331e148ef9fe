use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PoleError>;

#[derive(Debug, Error)]
pub enum PoleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no hypothesis: {0}")]
    NoHypothesis(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("{}: line {line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PoleError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PoleError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PoleError::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        PoleError::Parse { path: path.into(), line, message: message.into() }
    }
}
