use thiserror::Error;

/// Errors produced anywhere in the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("linear system is numerically singular (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },
    #[error("linear constraints are infeasible: {0}")]
    InfeasibleConstraints(String),
    #[error("trajectory diverged at t = {time}: |state| exceeded {threshold:e}")]
    Diverged { time: f64, threshold: f64 },
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("derivative order {0} is not supported")]
    OrderUnsupported(usize),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("weak-form subdomain does not fit in the data: {0}")]
    DomainTooSmall(String),
    #[error("library column {0} has zero norm")]
    ZeroColumn(usize),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("support columns are linearly dependent")]
    SingularSupport,
    #[error("AICc needs m > k + 2 (m = {m}, k = {k})")]
    DegenerateSampleSize { m: usize, k: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
