use std::io;

use thiserror::Error;

use crate::engine::SimTime;
use crate::source::SourceError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("config line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("run aborted at {time} ms: {source}")]
    Protocol {
        time: SimTime,
        #[source]
        source: SourceError,
    },

    #[error("invariant violated at {time} ms: {reason}")]
    Invariant { time: SimTime, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
