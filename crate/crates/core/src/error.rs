use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count mismatch: expected {expected}, found {found}")]
    QubitMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: operator is {expected}-dimensional but vector has {found} entries")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |A - A^dag| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (max |A^dag A - 1| = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error(
        "eigenphase {phase} lies within {margin:e} of the branch cut at +-pi; \
         the logarithm is ambiguous, use a shorter cycle time"
    )]
    BranchAmbiguity { phase: f64, margin: f64 },

    #[error("bound is vacuous: x = {x} is not below the critical value {critical}")]
    VacuousBound { x: f64, critical: f64 },

    #[error("insufficient data: {found} usable points, need at least {required}")]
    InsufficientData { found: usize, required: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("orthogonal array construction failed: {0}")]
    Construction(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("linear algebra backend failure: {0}")]
    Backend(#[from] ndarray_linalg::error::LinalgError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
