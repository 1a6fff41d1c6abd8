use alloc::string::String;

/// Errors raised by environment construction, simulation and policy setup.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("round {t} is outside the horizon 1..={horizon}")]
    RoundOutOfRange { t: usize, horizon: usize },
    #[error("arm {arm} is out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("expected a vector of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("block is not estimable: Gram matrix is singular or ill-conditioned")]
    NotEstimable,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
