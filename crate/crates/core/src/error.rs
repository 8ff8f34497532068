use alloc::string::String;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("insufficient source data: need {needed} samples, have {available}")]
    Capacity { needed: usize, available: usize },
    #[error("bound is undefined without channel noise (sigma^2 = 0)")]
    UndefinedBound,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
