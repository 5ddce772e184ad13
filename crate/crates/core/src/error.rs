use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("index {index} out of range for {species} orbitals (count {count})")]
    IndexOutOfRange {
        species: &'static str,
        index: usize,
        count: usize,
    },

    #[error("configuration basis too large: {size} configurations exceeds the limit of {limit}")]
    BasisTooLarge { size: u128, limit: usize },

    #[error("matrix is not Hermitian: max |A - A^H| = {deviation:e}")]
    NonHermitian { deviation: f64 },

    #[error("malformed ladder expression '{0}'")]
    MalformedExpression(String),

    #[error("non-finite value in {what} at t = {time}")]
    NonFinite { what: String, time: f64 },

    #[error("adaptive step size underflow at t = {time} (dt = {dt:e})")]
    StepUnderflow { time: f64, dt: f64 },

    #[error(
        "relaxation did not converge after {iterations} iterations \
         (|dE| = {energy_change:e}, orbital residual = {orbital_residual:e})"
    )]
    NotConverged {
        iterations: usize,
        energy_change: f64,
        orbital_residual: f64,
    },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SolverError>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(SolverError::Dimension {
            context,
            expected,
            actual,
        })
    }
}
