use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// The von Mises map or a nonlinearity denominator degenerated.
    #[error("transform degenerate: {0}")]
    Degenerate(String),
    /// Iterative solver or root finder failed to converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),
    /// Fixed-point iteration left the contraction regime.
    #[error("divergence: {0}")]
    Divergence(String),
    /// Quadrature cannot resolve the requested degree or accuracy.
    #[error("quadrature insufficient: {0}")]
    Quadrature(String),
}

impl Error {
    /// Whether the failure is numerical (as opposed to a validation error).
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Invalid(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
