//! Error type shared by all core modules.

use alloc::string::String;

/// Errors raised by the deconvolution engine.
///
/// Numerical soft failures inside the sampler (a proposal driving the model
/// nonpositive, an infinite loss) are not errors: they are represented by
/// `+inf` loss values and rejected by the Metropolis rule. `Error` is
/// reserved for contract violations and unrecoverable numerics.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical procedure failed to produce a trustworthy result.
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
