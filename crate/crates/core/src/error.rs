use thiserror::Error;

/// Errors raised by the reconstruction toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh parameter: {0}")]
    MeshParameter(String),

    #[error("mesh invariant violated: {0}")]
    MeshInvariant(String),

    #[error("invalid phantom: {0}")]
    Phantom(String),

    #[error("size mismatch in {what}: expected {expected}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("boundary current violates zero total current (relative violation {violation:.3e})")]
    IncompatibleCurrent { violation: f64 },

    #[error("factorization failed: non-positive pivot {pivot:.3e} at row {row}")]
    Factorization { row: usize, pivot: f64 },

    #[error("linear solve residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    SolveResidual { residual: f64, tolerance: f64 },

    #[error("NtD assembly symmetry defect {defect:.3e} exceeds {tolerance:.1e}")]
    SymmetryDefect { defect: f64, tolerance: f64 },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("matrix is not symmetric (relative defect {0:.3e})")]
    NotSymmetric(f64),

    #[error("Gram matrix is not positive definite")]
    IndefiniteGram,

    #[error("eigen residual {residual:.3e} exceeds tolerance for pair {index}")]
    EigenResidual { index: usize, residual: f64 },

    #[error("need at least {needed} eigenvalues, got {got}")]
    TooFewEigenvalues { needed: usize, got: usize },

    #[error("all eigenvalues at noise floor (threshold {threshold:.3e}); no reconstruction possible")]
    AllAtNoiseFloor { threshold: f64 },

    #[error("eigenpair unusable: admissible threshold interval [{lower:.3e}, {upper:.3e}] is empty")]
    EigenpairUnusable { lower: f64, upper: f64 },

    #[error("threshold target {target:.3e} exceeds total power {total:.3e}")]
    TargetExceedsPower { target: f64, total: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown strategy '{name}' (available: {available})")]
    UnknownStrategy { name: String, available: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
