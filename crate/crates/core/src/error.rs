//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by profile loading, trace handling, the simulator, and the
/// optimizer. Variants carry enough context to be printed to an end user.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid client profile: {0}")]
    Profile(String),

    #[error("invalid trace: {0}")]
    Trace(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metric input out of domain: {0}")]
    Metric(String),

    #[error("agent error: {0}")]
    Agent(String),

    #[error("simulation error: {0}")]
    Sim(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
