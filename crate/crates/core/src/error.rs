use thiserror::Error;

/// Errors raised by the stopping laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StopLabError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Model parameters violate a numerical precondition (e.g. no-arbitrage).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A computed quantity is unusable (non-finite gain, bound violation).
    #[error("data error: {0}")]
    Data(String),

    /// A stopping rule is malformed.
    #[error("structural error: {0}")]
    Structural(String),

    /// Exhaustive enumeration was refused because it would be too large.
    #[error("enumeration of {space} rules for n = {steps} refused: it would generate 2^{exponent} rules")]
    Size {
        space: &'static str,
        steps: usize,
        exponent: usize,
    },

    /// The Brownian driver ended before enough band exits occurred.
    #[error("refine driver grid: only {found} of {needed} band exits occur before t = {driver_horizon}")]
    InsufficientExits {
        found: usize,
        needed: usize,
        driver_horizon: f64,
    },

    /// Malformed CSV input.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, StopLabError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(StopLabError::Domain(msg.into()))
}
