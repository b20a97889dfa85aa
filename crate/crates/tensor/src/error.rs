use std::fmt;

/// Errors raised by tensor construction and graph operations.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// A single axis has the wrong extent.
    Dimension {
        op: &'static str,
        axis: usize,
        expected: usize,
        actual: usize,
    },
    /// Rank or overall shape is incompatible with the operation.
    Shape { op: &'static str, detail: String },
    /// An operation parameter is out of its valid range.
    Param { op: &'static str, detail: String },
    /// Weight normalization hit an all-zero direction vector.
    Singular { op: &'static str, channel: usize },
    /// Train-mode batch normalization needs at least two samples.
    BatchTooSmall { op: &'static str, batch: usize },
    /// Misuse of the graph API (non-scalar loss, foreign variable, ...).
    Contract(String),
    /// Validation mode caught a NaN or infinity in an operation output.
    NonFinite { op: &'static str },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Dimension {
                op,
                axis,
                expected,
                actual,
            } => write!(
                f,
                "{op}: dimension mismatch on axis {axis}: expected {expected}, got {actual}"
            ),
            Self::Shape { op, detail } => write!(f, "{op}: shape error: {detail}"),
            Self::Param { op, detail } => write!(f, "{op}: invalid parameter: {detail}"),
            Self::Singular { op, channel } => {
                write!(f, "{op}: zero-norm direction in output channel {channel}")
            }
            Self::BatchTooSmall { op, batch } => write!(
                f,
                "{op}: train mode needs a batch of at least 2 samples, got {batch}"
            ),
            Self::Contract(msg) => write!(f, "graph contract violated: {msg}"),
            Self::NonFinite { op } => write!(f, "{op}: produced a non-finite value"),
        }
    }
}

impl std::error::Error for TensorError {}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
