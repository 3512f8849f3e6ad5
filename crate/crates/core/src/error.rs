use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("wrapper incompatible with environment: {0}")]
    WrapperIncompatible(String),
    #[error("action {action} out of range for {num_actions} actions")]
    ActionOutOfRange { action: usize, num_actions: usize },
    #[error("episode finished; call reset first")]
    EpisodeFinished,
    #[error("environment stepped before reset")]
    NotReset,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("family {0} is not a linear-process family")]
    NotLinProc(String),
    #[error("kernel and data use different arithmetic modes")]
    ArithmeticModeMismatch,
    #[error("kernel is not invertible: {0}")]
    NonInvertibleKernel(String),
    #[error("delay {delay} does not fit in horizon {horizon}")]
    DelayExceedsHorizon { delay: usize, horizon: usize },
    #[error("cannot serialize non-finite value {0}")]
    SerializationOverflow(f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("enumeration exceeds {limit} leaves")]
    EnumerationTooLarge { limit: usize },
    #[error("policy space of size {size} exceeds limit {limit}")]
    PolicySpaceTooLarge { size: String, limit: usize },
    #[error("zero denominator on a reachable history at t={t}")]
    ZeroDenominatorOnReachableHistory { t: usize },
    #[error("conditioning event has zero probability")]
    UndefinedConditional,
    #[error("partitions have different ground sets ({0} vs {1})")]
    GroundSetMismatch(usize, usize),
    #[error("policy cannot drive this environment: {0}")]
    PolicyEnvMismatch(String),
    #[error("malformed process table: {0}")]
    MalformedProcess(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
