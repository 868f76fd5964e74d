use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A policy was handed an input its upstream contract rules out.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Message and side information disagree about whether a transmission happened.
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("need at least {required} samples, got {found}")]
    InsufficientSamples { required: usize, found: usize },

    #[error("need at least {required} transmissions, observed {found}")]
    InsufficientTransmissions { required: usize, found: usize },

    #[error("invalid search interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("empty {0}")]
    EmptyGrid(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
