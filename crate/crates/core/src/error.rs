use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is too small to normalize")]
    ZeroVector { norm: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),
    #[error("boundary state has not been initialized")]
    Uninitialized,
    #[error("degenerate boundary spec: prototypes are equal or antipodal")]
    DegenerateSpec,
    #[error("could not place {placed} of {requested} separated class means in {proposals} proposals")]
    SeparationFailure {
        placed: usize,
        requested: usize,
        proposals: usize,
    },
    #[error("non-finite loss at iteration {iter}")]
    NonFiniteLoss { iter: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("pair set has no genuine or no impostor pairs")]
    EmptyPairs,
}
