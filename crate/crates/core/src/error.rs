use thiserror::Error;

/// Errors raised by the numerical layers of the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum MrhError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A truncated series did not reach its tail bound within the term budget.
    #[error("series did not converge after {terms} terms (relative tail bound {bound:e})")]
    Convergence { terms: usize, bound: f64 },

    /// Adaptive quadrature ran out of subdivisions before meeting its tolerance.
    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    /// Every forward weight vanished: the observation at `index` is impossible
    /// under the model and the supplied state constraints.
    #[error("likelihood is zero at observation {index}")]
    ZeroLikelihood { index: usize },

    /// Brute-force enumeration refused because the track is too long.
    #[error("brute-force enumeration limited to {max} increments, got {n}")]
    TooLarge { n: usize, max: usize },

    /// A required precondition on parameters is not met.
    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, MrhError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(MrhError::Domain(msg.into()))
}
