//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate latent: zero-norm vector cannot be normalized")]
    DegenerateLatent,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unreachable within horizon: {0}")]
    UnreachableWithinHorizon(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("solver aborted: {0}")]
    SolverAbort(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
