use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("missing split: {0}")]
    MissingSplit(PathBuf),

    #[error("cannot corrupt triples with fewer than 2 entities (got {0})")]
    CannotCorrupt(usize),

    #[error("non-finite loss at step {step} (positive triple #{triple})")]
    NonFiniteLoss { step: usize, triple: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint is incompatible with dataset: {0}")]
    Incompatible(String),

    #[error("output directory is locked by another run: {0}")]
    Locked(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
