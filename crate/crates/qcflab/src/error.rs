use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Reject(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not positive definite along the given vector")]
    NotSpd,
    #[error("invalid kind: {0}")]
    InvalidKind(String),
    #[error("zero pivot in tridiagonal solve at row {0}")]
    ZeroPivot(usize),
    #[error("matrix is singular (pivot {pivot:e} at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("B is not symmetric positive definite")]
    BNotSpd,
    #[error("no sign change on [{0}, {1}]")]
    NoSignChange(f64, f64),
    #[error("no root found up to F = {0}")]
    NoRoot(f64),
    #[error("unstable parameters: A_F = {0}")]
    UnstableParams(f64),
    #[error("singular preconditioner")]
    SingularPreconditioner,
    #[error("insufficient data: need {need} steps, have {have}")]
    InsufficientData { need: usize, have: usize },
    #[error("{0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
