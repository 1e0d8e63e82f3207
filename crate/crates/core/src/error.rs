use thiserror::Error;

/// Errors produced by the simulation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The request would exceed a hard complexity limit (subset enumeration,
    /// exhaustive search).
    #[error("complexity guard: {0}")]
    Guard(String),
    /// The parameters describe something that cannot be built.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// An iterative search did not find a solution inside its bracket.
    #[error("no convergence: {0}")]
    NonConvergence(String),
    /// Vector or matrix sizes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A configuration document could not be parsed or is inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
