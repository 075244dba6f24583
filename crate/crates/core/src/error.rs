use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range 1..={max}")]
    Index { index: usize, max: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("function evaluation produced a non-finite value at x = {0}")]
    Evaluation(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("integration diverged at step {step}: {reason}")]
    Integration { step: usize, reason: String },

    #[error("state error: {0}")]
    State(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient data: {usable} usable levels, need at least {needed}")]
    InsufficientData { usable: usize, needed: usize },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
