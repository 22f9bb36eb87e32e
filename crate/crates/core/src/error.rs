use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("uniform variate {0} is outside the open interval (0, 1)")]
    InvalidVariate(f64),

    #[error("numerical failure in {context}: achieved error {achieved:e} (target {target:e})")]
    Numerical {
        context: &'static str,
        achieved: f64,
        target: f64,
    },

    #[error("event cap of {cap} exceeded at time {time_reached} of {horizon}")]
    EventCap {
        cap: u64,
        time_reached: f64,
        horizon: f64,
    },

    #[error("state space of size {size} exceeds the limit {limit}")]
    StateSpaceTooLarge { size: u128, limit: u128 },

    #[error("stiff system: {0}")]
    Stiffness(String),

    #[error("undefined case: {0}")]
    Undefined(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
