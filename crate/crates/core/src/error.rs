//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Last iterate of a solver that hit its iteration cap, kept for
/// post-mortem inspection. Stored in double precision regardless of the
/// working scalar type.
#[derive(Debug, Clone)]
pub struct PartialIterate {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major entries of the last matrix iterate.
    pub values: Vec<f64>,
    /// Scalar offset iterate, when the problem has one.
    pub mu: Option<f64>,
    pub objective: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("SVD failed to converge (LAPACK info {info})")]
    SvdFailed { info: i32 },

    #[error("{solver} reached the iteration cap ({iterations} iterations, residual {residual:.3e})")]
    IterationCap {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        last: Option<Box<PartialIterate>>,
    },

    #[error("bracket expansion failed while solving for the rate offset (residual {residual:.3e})")]
    BracketFailure { residual: f64 },

    #[error("cross-validation fold {fold} is empty; use fewer folds than observed entries")]
    EmptyFold { fold: usize },

    #[error("zero denominator in {context}")]
    ZeroDenominator { context: &'static str },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("bad file format in {path}: {msg}")]
    Format { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
