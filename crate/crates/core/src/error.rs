use alloc::string::String;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("state outside the support of the reference distribution: {0}")]
    Domain(String),
    /// Every particle would be killed at the proposed level.
    #[error("particle extinction at level {level} ({killed} of {n} particles at or below it)")]
    Extinction { level: f64, killed: usize, n: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("infeasible state: {0}")]
    Infeasible(String),
}

pub type Result<T> = core::result::Result<T, Error>;
