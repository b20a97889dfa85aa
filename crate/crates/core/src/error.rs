use std::fmt;
use std::io;

use eegvit_tensor::TensorError;

use crate::checkpoint::CheckpointError;
use crate::data::DataError;

#[derive(Debug)]
pub enum Error {
    Config(String),
    Tensor(TensorError),
    Checkpoint(CheckpointError),
    Data(DataError),
    Io(io::Error),
    /// Loss or prediction became NaN or infinite.
    NonFinite(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Tensor(e) => write!(f, "{e}"),
            Error::Checkpoint(e) => write!(f, "checkpoint error: {e}"),
            Error::Data(e) => write!(f, "data error: {e}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::NonFinite(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

// Display already prints the wrapped error.
impl std::error::Error for Error {}

impl From<TensorError> for Error {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFinite { op } => Error::NonFinite(format!("non-finite value after {op}")),
            other => Error::Tensor(other),
        }
    }
}

impl From<CheckpointError> for Error {
    fn from(e: CheckpointError) -> Self {
        Error::Checkpoint(e)
    }
}

impl From<DataError> for Error {
    fn from(e: DataError) -> Self {
        Error::Data(e)
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
