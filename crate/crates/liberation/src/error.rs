use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] liberation_core::Error),
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 1 usage/config, 2 numerical failure, 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Json(_) => 1,
            Error::Core(e) if is_input_error(e) => 1,
            Error::Verification(_) => 3,
            _ => 2,
        }
    }
}

fn is_input_error(e: &liberation_core::Error) -> bool {
    use liberation_core::Error as E;
    matches!(e, E::InvalidParameter { .. } | E::InvalidMeasure { .. } | E::InvalidTrace { .. })
}

pub type Result<T> = std::result::Result<T, Error>;
