use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time to intersection is undefined at speed {speed} m/s")]
    UndefinedTti { speed: f64 },

    #[error("unknown player index {0}")]
    UnknownPlayer(usize),

    #[error("invalid scenario at {location}: {reason}")]
    Config { location: String, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(location: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            location: location.into(),
            reason: reason.into(),
        }
    }
}
