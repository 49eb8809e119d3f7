use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite gradient in epoch {epoch}, batch {batch}")]
    NumericFailure { epoch: usize, batch: usize },

    #[error("{path}: bad {field}: {detail}")]
    Parse {
        path: PathBuf,
        field: &'static str,
        detail: String,
    },

    #[error("insufficient source data: need {required} examples, have {available}")]
    Capacity { required: usize, available: usize },

    #[error("timestep {timestep}, client {client}{}: {source}", model.map(|m| format!(", model {m}")).unwrap_or_default())]
    Engine {
        timestep: usize,
        client: usize,
        model: Option<u64>,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Wraps an engine failure with the coordinates where it happened.
    pub(crate) fn at(self, timestep: usize, client: usize, model: Option<u64>) -> Self {
        Error::Engine {
            timestep,
            client,
            model,
            source: Box::new(self),
        }
    }
}
