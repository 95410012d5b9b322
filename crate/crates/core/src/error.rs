use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {diff:e} exceeds {tol:e}")]
    Asymmetric {
        row: usize,
        col: usize,
        diff: f64,
        tol: f64,
    },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("negative inner product {0:e}: weight matrix is not positive definite")]
    NegativeNorm(f64),

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("conjugate gradient breakdown: nonpositive curvature {0:e}")]
    Breakdown(f64),

    #[error("every column was dropped during orthonormalization")]
    EmptyBasis,

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("basis is orthonormal in the {found} metric but {expected} was required")]
    MetricMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("degenerate gap: delta = {0:e}")]
    DegenerateGap(f64),

    #[error("empty candidate set for gap computation")]
    EmptyCandidates,

    #[error("dimension {n} exceeds the dense limit {limit}")]
    DenseLimit { n: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate element {0}")]
    DegenerateElement(usize),

    #[error("coarsening stagnated at level {level}: {n} unknowns produced {n} aggregates")]
    CoarseningStagnation { level: usize, n: usize },

    #[error("multigrid did not converge in {cycles} cycles (relative residual {residual:e})")]
    MultigridNoConvergence { cycles: usize, residual: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
