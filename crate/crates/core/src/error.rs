//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by dataset construction, model training, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A matrix or vector had the wrong width for the consumer.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    /// Training produced a non-finite loss and was aborted.
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    TrainingDiverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    /// A signal evaluated to a non-finite value.
    #[error("non-finite value for signal {signal} at row {row}")]
    NonFiniteSignal { signal: String, row: usize },

    /// A dataset file could not be parsed.
    #[error("parse error in {path} at row {row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },

    /// A component of a composite fit failed.
    #[error("{component}: {source}")]
    Component {
        component: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps an error with the name of the component that produced it.
    pub fn in_component(self, component: &str) -> Self {
        Error::Component {
            component: component.to_string(),
            source: Box::new(self),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
