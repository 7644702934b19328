use std::path::PathBuf;

use thiserror::Error;

/// Every fallible operation in the lab returns this error.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("undefined test: {0}")]
    UndefinedTest(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Process exit code used by the CLI: 2 for configuration problems, 3 for
    /// numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_)
            | LabError::Parse { .. }
            | LabError::Schema(_)
            | LabError::InvalidArchitecture(_)
            | LabError::Json(_) => 2,
            LabError::NumericFailure(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
