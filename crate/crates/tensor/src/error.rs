use thiserror::Error;

/// Failures raised by tensor construction, primitive ops, autodiff and IO.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("{op}: invalid argument, {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("backward: expected a single-element tensor, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("backward: tensor #{0} in `wrt` does not participate in the recorded computation")]
    NotOnRecord(usize),

    #[error("tensor format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn mismatch(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
