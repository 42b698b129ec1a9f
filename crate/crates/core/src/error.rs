use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OnnError>;

#[derive(Debug, Error)]
pub enum OnnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("missing back-propagation cache: {0}")]
    MissingCache(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl OnnError {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        OnnError::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        OnnError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OnnError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        OnnError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end: 2 for bad input,
    /// 3 for numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            OnnError::NonFinite(_) | OnnError::Divergence { .. } => 3,
            _ => 2,
        }
    }
}
