use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("user index {index} out of range for {n_users} users")]
    UserOutOfRange { index: usize, n_users: usize },

    #[error("channel index {index} out of range 1..={n_channels}")]
    ChannelOutOfRange { index: usize, n_channels: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("user {user} transmits with probability {attempt} but its cap is {cap}")]
    OffCap { user: usize, attempt: f64, cap: f64 },

    #[error("rate {rate} of user {user} is below its disagreement rate {floor}")]
    OutsideBargainingSet { user: usize, rate: f64, floor: f64 },

    #[error("N/K = {n}/{k} must be an integer")]
    NonIntegralLoad { n: usize, k: usize },

    #[error("demands are infeasible (best achievable worst-case margin {margin:.3e})")]
    Infeasible { margin: f64 },

    #[error("channel {channel} observed fully busy; idle estimate is zero")]
    SaturatedObservation { channel: usize },

    #[error("empty estimation window")]
    EmptyWindow,

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
