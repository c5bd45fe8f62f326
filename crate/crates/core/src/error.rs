use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MraError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal must be non-empty with finite entries")]
    InvalidSignal,

    #[error("prior is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("orbit of {size} elements exceeds the enumeration budget {budget}")]
    BudgetExceeded { size: u128, budget: u128 },

    #[error("noise level sigma must be positive for this operation")]
    ZeroNoise,

    #[error("batch is not noiseless: {0}")]
    NoisyBatch(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl MraError {
    /// True for errors caused by the caller's configuration rather than by
    /// the numerics.
    pub fn is_config_error(&self) -> bool {
        !matches!(self, MraError::Numerical(_) | MraError::NotPositiveDefinite(_))
    }
}

pub type Result<T> = std::result::Result<T, MraError>;
