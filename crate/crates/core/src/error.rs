use thiserror::Error;

use crate::special::SpecialError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Special(#[from] SpecialError),

    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A theorem hypothesis or operation precondition does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("no sign change in the response profile")]
    NoSignChange,

    #[error("angle unresolvable at this bandwidth: arcsin argument {0} > 1")]
    AngleUnresolvable(f64),

    #[error("no evaluation points inside the test ball")]
    EmptyBall,

    #[error("memory guard: {n} points exceeds the dense matrix cap of {cap}")]
    MatrixTooLarge { n: usize, cap: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
