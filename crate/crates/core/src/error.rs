use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical quantity outside the range the model is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A scenario configuration problem, naming the offending key.
    #[error("invalid config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// QBER of an empty sifted key.
    #[error("QBER undefined: no sifted bits")]
    EmptySiftedKey,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for errors the CLI reports as configuration errors.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
