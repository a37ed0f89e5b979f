use thiserror::Error;

use crate::mesh::MeshError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("problem `{0}` has no exact solution")]
    MissingExactSolution(String),

    #[error("non-finite state after step {step}")]
    Diverged { step: usize },

    #[error("negative quadratic form {0:e}; mass matrix is broken")]
    NegativeQuadraticForm(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
