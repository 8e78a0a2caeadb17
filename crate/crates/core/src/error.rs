use std::path::PathBuf;

use thiserror::Error;

use crate::losses::LossKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hyperparameter: {0}")]
    InvalidParameter(String),

    #[error("{kind} conjugate evaluated at v = {v}, outside its domain [{lower}, {upper}]")]
    DomainViolation {
        kind: LossKind,
        v: f64,
        lower: f64,
        upper: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{0} is not supported")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
