use thiserror::Error;

/// Errors raised by the numerical kernels and the test itself.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the function.
    #[error("{function}: argument out of domain ({detail})")]
    Domain {
        function: &'static str,
        detail: String,
    },

    /// Vector lengths or matrix shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The supplied covariance is not symmetric positive definite.
    #[error("covariance matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    /// An iterative method ran out of iterations before converging.
    #[error("{method} did not converge after {iterations} iterations")]
    Convergence {
        method: &'static str,
        iterations: usize,
    },

    /// A value left the representable range of `f64`.
    #[error("{0}: result overflows f64")]
    Overflow(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        function,
        detail: detail.into(),
    }
}
