use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("matrix contains NaN or infinite entries")]
    NonFinite,

    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),

    #[error("not Hermitian (residual {0:e})")]
    NonHermitian(f64),

    #[error("eigen-solver did not converge: {0}")]
    NoConvergence(String),

    #[error("invalid POVM '{label}': {reason}")]
    InvalidPovm { label: String, reason: String },

    #[error("partition does not match the measurement: {0}")]
    PartitionMismatch(String),

    #[error("plan does not match the assemblage: {0}")]
    PlanMismatch(String),

    #[error("weights do not sum to one: {0}")]
    WeightError(String),

    #[error("argument out of range: {0}")]
    BadRange(String),

    #[error("visibility {0} outside [0, 1]")]
    BadVisibility(f64),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("measurement is not projective: {0}")]
    NotProjective(String),

    #[error("measurement is not rank-one projective: {0}")]
    NotRankOneProjective(String),

    #[error("wrong shape for this witness: {0}")]
    WrongShape(String),

    #[error("SDP solver failure: {0}")]
    SolverFailure(String),

    #[error("threshold not bracketed: {0}")]
    NotBracketed(String),

    #[error("predicate is not monotone in visibility: {0}")]
    NonMonotone(String),
}

pub type Result<T> = std::result::Result<T, Error>;
