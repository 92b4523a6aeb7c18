use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("eigensolver did not converge; achieved residuals {residuals:?}")]
    NonConverged { residuals: Vec<f64> },

    #[error("dense oracle limited to d <= {cap}, got d = {d}")]
    CapExceeded { d: usize, cap: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("step {step} not found; available steps: {available:?}")]
    MissingCheckpoint { step: u64, available: Vec<u64> },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite { context: context.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
