use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid hyperparameter, spec or config value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Mismatched lengths, dimensions or segment counts.
    #[error("shape error: {0}")]
    Shape(String),

    /// A requested index range does not fit the data.
    #[error("range error: {0}")]
    Range(String),

    #[error("cannot normalize a zero vector")]
    ZeroNorm,

    #[error("feature is not unit norm (|z| = {0})")]
    NotNormalized(f64),

    /// NaN/inf met outside a training step, e.g. an overflowing activation.
    #[error("non-finite value: {0}")]
    NotFinite(String),

    /// A loss or parameter became NaN/inf during training.
    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }
}
