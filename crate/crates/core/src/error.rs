use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition (dimension mismatch,
    /// zero-norm vector, empty matrix, out-of-range label, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A pruning or model configuration that cannot be executed.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("tensor not found: {0}")]
    TensorNotFound(String),

    #[error("incomplete checkpoint: missing tensor {0}")]
    IncompleteCheckpoint(String),

    #[error("shape mismatch for {name}: expected {expected:?}, found {actual:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid manifest {}", path.display())]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
