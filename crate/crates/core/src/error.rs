use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// `x e^{-x} = theta` has no real solution (`theta > 1/e`).
    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A threshold recursion produced a decreasing step (or a non-positive
    /// denominator) at index `n`.
    #[error("monotonicity violation at n = {n}")]
    MonotonicityViolation { n: usize },

    /// A computation ran to its limit without reaching a verdict.
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    /// An internal consistency check failed.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
