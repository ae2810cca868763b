use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The model parameters do not admit a positive coexistence equilibrium.
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The variance equations need the moment of order 2p, which has no
    /// closed form outside p = 1/2 and p = 1.
    #[error("no moment closure for p = {p}: the moment of order 2p must be computed from a density field")]
    Closure { p: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("singular tridiagonal system (zero pivot at row {row})")]
    Singular { row: usize },

    #[error("relative entropy is infinite: reference density vanishes at x = {x} where f > 0")]
    InfiniteEntropy { x: f64 },

    #[error("no decay window: {0}")]
    NoFit(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
