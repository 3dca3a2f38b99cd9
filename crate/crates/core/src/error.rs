use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("matrix not positive definite after jitter ({context})")]
    NotPositiveDefinite { context: &'static str },

    #[error("negative radicand {0} in variational parameter")]
    NegativeRadicand(f64),

    #[error("group {group} outside 1..={m}; group levels are frozen at warm-up")]
    GroupOutOfRange { group: usize, m: usize },

    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
