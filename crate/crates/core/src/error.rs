use alloc::string::String;

/// Errors raised by the core estimators and models.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {0} has no samples")]
    MissingClass(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("enumeration needs {required} evaluations, limit is {limit}")]
    Blowup { required: u128, limit: u128 },

    #[error("embedding norm {norm} is not 1 (unit-norm encoder required)")]
    NotUnitNorm { norm: f64 },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, trace: alloc::vec::Vec<f64> },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
