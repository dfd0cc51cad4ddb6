use thiserror::Error;

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: data length {len} does not match shape {shape:?}")]
    DataLength {
        op: &'static str,
        len: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: shape mismatch in {dim}: expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        dim: String,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: input extent {size} (padded) is smaller than kernel {kernel}")]
    InputTooSmall {
        op: &'static str,
        size: usize,
        kernel: usize,
    },
    #[error("{op}: computed output size {size} is not positive")]
    NonPositiveOutput { op: &'static str, size: i64 },
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
    #[error("batch norm needs at least 2 samples in training mode, got {0}")]
    BatchTooSmall(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

impl TensorError {
    pub(crate) fn mismatch(op: &'static str, dim: impl Into<String>, expected: usize, actual: usize) -> Self {
        TensorError::ShapeMismatch {
            op,
            dim: dim.into(),
            expected,
            actual,
        }
    }
}
