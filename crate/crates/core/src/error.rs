use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tag/unit count does not line up with the word count.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// Unknown tag string or a BIO violation.
    #[error("format error: {0}")]
    Format(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("word {0:?} is not in the model vocabulary")]
    Vocab(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("nothing to evaluate: {0}")]
    EmptyEvaluation(String),

    /// The top-1 candidate of an example could not be decoded into spans.
    #[error("decode error: {0}")]
    Decode(String),

    /// Zero-probability context or no usable contexts for an estimate.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Coarse error classes, used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Capacity,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_) | Error::Config(_) => ErrorClass::Usage,
            Error::Capacity(_) => ErrorClass::Capacity,
            _ => ErrorClass::Data,
        }
    }

    /// Process exit code: 2 config/usage, 3 data/format, 4 capacity.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Capacity => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
