use thiserror::Error;

use crate::qfield::QField;

#[derive(Debug, Error, Clone)]
pub enum QvlError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("split failed: {0}")]
    Split(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("io: {0}")]
    Io(String),
    #[error("no convergence: {}", .0.message)]
    Convergence(Box<ConvergenceFailure>),
}

/// Solver state at the point it gave up.
#[derive(Debug, Clone)]
pub struct ConvergenceFailure {
    pub message: String,
    pub last_iterate: QField,
    pub energy_trace: Vec<f64>,
}

pub type Result<T> = std::result::Result<T, QvlError>;

impl From<std::io::Error> for QvlError {
    fn from(e: std::io::Error) -> Self {
        QvlError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for QvlError {
    fn from(e: serde_json::Error) -> Self {
        QvlError::Io(e.to_string())
    }
}
