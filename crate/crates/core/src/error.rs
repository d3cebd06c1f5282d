use thiserror::Error;

/// Errors raised by the library layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensError {
    #[error("corruption fraction eta = {0} must lie in (0, 1)")]
    InvalidEta(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("dataset entries must be finite")]
    NonFinite,
    #[error("enumeration guard violated: {0}")]
    EnumerationGuard(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("unbounded sensitivity: estimator `{estimator}` has infinite sensitivity under adversary `{adversary}` for k >= 1")]
    UnboundedSensitivity { estimator: String, adversary: String },
    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),
    #[error("unknown adversary `{0}`")]
    UnknownAdversary(String),
    #[error("estimator `{estimator}` is not supported by adversary `{adversary}`")]
    Unsupported { estimator: String, adversary: String },
    #[error("scaling fit needs at least {required} usable points, found {usable}")]
    InsufficientPoints { usable: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, SensError>;

pub(crate) fn invalid(msg: impl Into<String>) -> SensError {
    SensError::InvalidArgument(msg.into())
}
