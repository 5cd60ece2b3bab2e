//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TactError>;

#[derive(Debug, Error)]
pub enum TactError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl TactError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        TactError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 usage, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            TactError::Config(_) => 2,
            TactError::Numeric(_) => 4,
            _ => 3,
        }
    }
}
