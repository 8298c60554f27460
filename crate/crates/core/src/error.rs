use thiserror::Error;

use crate::models::TrainerReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid transition: {0}")]
    InvalidTransition(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("backward called without a preceding forward pass")]
    NoForwardCache,

    #[error("unknown {kind} `{name}`; available: {available}")]
    UnknownName {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// Training produced a non-finite loss. Carries whatever the trainer had
    /// recorded up to the failing epoch.
    #[error("training diverged: {message}")]
    Divergence {
        message: String,
        report: Option<Box<TrainerReport>>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
