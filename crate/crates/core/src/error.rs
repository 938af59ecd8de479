use thiserror::Error;

use crate::state::HfbState;

#[derive(Debug, Error)]
pub enum HfbError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("unknown field spec `{0}`")]
    UnknownSpec(String),

    #[error("pair potential is not even: odd part {odd_part:e} exceeds {tolerance:e}")]
    OddPairPotential { odd_part: f64, tolerance: f64 },

    #[error("field is not real: imaginary part {0:e}")]
    NotReal(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupted state: {0}")]
    CorruptedState(String),

    #[error("non-finite value at t = {t}")]
    NumericalAbort { t: f64, last_valid: Box<HfbState> },

    #[error("Picard iteration does not contract (factor {factor:.3e}) at t = {t}")]
    NonContraction { factor: f64, t: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HfbError>;
