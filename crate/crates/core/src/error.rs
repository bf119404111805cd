use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("map evaluation failed at point {index}: {reason}")]
    MapEvaluation { index: usize, reason: String },

    #[error("source atom {0} carries zero mass; its barycentric value is undefined")]
    ZeroMassRow(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("map is not nondecreasing on atoms {0} and {1}")]
    NotMonotone(usize, usize),

    #[error("identity check failed for {what}: gap {gap:e}")]
    IdentityViolated { what: &'static str, gap: f64 },

    #[error("QCQP {status} at outer iteration {iteration} (violation {violation:e})")]
    Qcqp {
        status: crate::qcqp::SolveStatus,
        iteration: usize,
        violation: f64,
    },

    #[error("{solver} failed at iteration {iteration}: {source}")]
    SolverStep {
        solver: &'static str,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite gradient at step {0}")]
    NonFiniteGradient(usize),

    #[error("network simplex exceeded {0} pivots")]
    PivotLimit(usize),

    #[error("experiment assertion failed: {0}")]
    Assertion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
