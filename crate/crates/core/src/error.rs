use thiserror::Error;

/// Errors raised by the optimization and privacy routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The inner solver ran out of iterations before its optimality
    /// certificate fired. `best` is the best iterate found.
    #[error("solver did not certify after {iterations} iterations (gap bound {residual:.3e})")]
    Convergence {
        best: Vec<f64>,
        residual: f64,
        iterations: usize,
    },

    #[error("resource limit exceeded: {0}")]
    Resource(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
