use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("order {order} needs {needed} capsules but only {available} are available")]
    OrderTooHigh {
        order: usize,
        needed: usize,
        available: usize,
    },

    #[error("radial term b_{order}(kR = {kr}) is numerically zero (|b| = {magnitude:e})")]
    BesselNull {
        order: usize,
        kr: f64,
        magnitude: f64,
    },

    #[error("{0} is only supported for open spheres")]
    EnclosureUnsupported(&'static str),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
