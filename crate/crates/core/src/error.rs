use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("training error: non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("training error: non-finite loss at epoch {epoch}, pair `{pair}`")]
    NonFiniteLoss { epoch: usize, pair: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("rectification error: {0}")]
    Rectification(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("matcher error: {0}")]
    Matcher(String),

    #[error("contract violation: {0}")]
    Contract(String),
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by input data (files, manifests, images).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Format { .. }
                | Error::Rectification(_)
                | Error::Sampling(_)
                | Error::Config(_)
        )
    }

    /// True for failures of the numeric pipeline.
    pub fn is_numeric_error(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. } | Error::Matcher(_)
        )
    }
}
