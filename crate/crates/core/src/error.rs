use std::io;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid hyperparameter, architecture, or experiment setting.
    #[error("configuration error: {0}")]
    Config(String),
    /// Matrix or parameter shapes that do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// Malformed or out-of-range input data.
    #[error("data error: {0}")]
    Data(String),
    /// A metric whose conditioning set is empty.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// A loss or parameter became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
