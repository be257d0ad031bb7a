use std::io;

use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or indices that do not fit the game they are used with.
    #[error("structural error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// An agent or transcript broke the round protocol.
    #[error("protocol violation at round {round}: {message}")]
    Protocol { round: u64, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("linear program did not reach an optimum: {0:?}")]
    Lp(LpStatus),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn protocol(round: u64, msg: impl Into<String>) -> Self {
        Error::Protocol {
            round,
            message: msg.into(),
        }
    }
}
