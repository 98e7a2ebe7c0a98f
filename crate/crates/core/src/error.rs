use alloc::string::String;

/// Errors raised by the core routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("invalid binary code: {0}")]
    InvalidBits(String),
    #[error("dimension {d} exceeds the configured cap of {max}")]
    DimensionTooLarge { d: usize, max: usize },
    #[error("invalid subset: {0}")]
    InvalidSubset(String),
    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),
    #[error("invalid signature: {0}")]
    InvalidSignature(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("signature is not attainable: solved weight w_{k} = {weight:e}")]
    NotAttainable { k: usize, weight: f64 },
    #[error("partial signature is not attainable (phase-one optimum {phase_one_objective:e})")]
    Infeasible { phase_one_objective: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("no target labels given")]
    EmptyTargets,
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("margin {0} is degenerate")]
    DegenerateMargin(usize),
    #[error("ties present in column {column}; use the tie-splitting estimator")]
    TiesPresent { column: usize },
    #[error("too few rows: {n} (need at least {required})")]
    TooFewRows { n: usize, required: usize },
    #[error("non-positive price {value} at row {row}, column {column}")]
    NonPositivePrice { row: usize, column: usize, value: f64 },
    #[error("theta {0} outside [-4, 4]")]
    ThetaOutOfRange(f64),
    #[error("computation cancelled")]
    Cancelled,
}

pub type Result<T> = core::result::Result<T, Error>;
