use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error: {0}")]
    Format(String),

    /// A non-finite value appeared. `step` is the optimisation step when known.
    #[error("numerics error{}: {message}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numerics { message: String, step: Option<u64> },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics { message: msg.into(), step: None }
    }

    /// Attach the optimisation step to a numerics error; other kinds pass through.
    pub fn at_step(self, step: u64) -> Self {
        match self {
            Error::Numerics { message, .. } => Error::Numerics { message, step: Some(step) },
            other => other,
        }
    }
}
