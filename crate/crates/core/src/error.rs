use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Decode { path: PathBuf, msg: String },

    #[error("manifest {}: {msg}", path.display())]
    Manifest { path: PathBuf, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn decode(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Decode { path: path.into(), msg: msg.into() }
    }

    /// Whether the error stems from bad input (exit code 2) rather than a
    /// failure inside the program (exit code 1).
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Internal(_) | Error::NonFiniteLoss { .. })
    }
}
