use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The model or regime does not provide the requested capability.
    #[error("capability error: {0}")]
    Capability(String),
    /// An intensity vanishes where a logarithm or ratio is required.
    #[error("singularity: {0}")]
    Singularity(String),
    /// A documented precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// An estimator could not produce a value.
    #[error("estimation failed: {0}")]
    Estimation(String),
    /// A curvature or information quantity is not positive.
    #[error("degenerate: {0}")]
    Degenerate(String),
    /// A numerical routine failed (factorization, convergence).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Invalid configuration.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
