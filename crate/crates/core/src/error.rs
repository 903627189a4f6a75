use thiserror::Error;

pub type Result<T, E = SbiError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SbiError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("no valid simulations to train on ({dropped} invalid rows dropped)")]
    NoValidRows { dropped: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("diagnostic failed: {0}")]
    Diagnostic(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SbiError {
    /// Errors caused by numerics (as opposed to bad input or usage).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            SbiError::NonFiniteLoss { .. }
                | SbiError::Sampling(_)
                | SbiError::Diagnostic(_)
                | SbiError::Simulation(_)
                | SbiError::NoValidRows { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> SbiError {
    SbiError::InvalidParameter(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(SbiError::DimensionMismatch { expected, got });
    }
    Ok(())
}
