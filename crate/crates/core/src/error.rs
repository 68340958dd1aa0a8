use std::io;

use thiserror::Error;

/// Errors raised anywhere in the imaging pipeline.
#[derive(Debug, Error)]
pub enum IsarError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("position ({x:.4}, {y:.4}) lies outside the scene domain")]
    OutOfDomain { x: f64, y: f64 },

    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, IsarError>;

macro_rules! ensure_arg {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::IsarError::InvalidArgument(format!($($fmt)+)));
        }
    };
}

pub(crate) use ensure_arg;
