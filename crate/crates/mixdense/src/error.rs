//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("resource limit exceeded: {what} = {requested} > {limit}")]
    ResourceLimit {
        what: &'static str,
        limit: u64,
        requested: u64,
    },

    #[error("did not converge: {context}")]
    NonConvergence {
        context: String,
        /// Partial construction state at the point of failure, when a
        /// pipeline got far enough to have one.
        trace: Option<Box<crate::constructive::ConstructionTrace>>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn non_convergence(context: impl Into<String>) -> Self {
        Error::NonConvergence {
            context: context.into(),
            trace: None,
        }
    }
}
