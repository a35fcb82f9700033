//! Crate-wide error type.
//!
//! Every fallible operation in the library returns [`Error`]. The
//! [`Error::exit_code`] mapping is the contract the `semob` binary uses:
//! 2 for configuration problems, 3 for data problems, 4 for backend
//! problems.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up for an operation.
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An exported numeric operation produced NaN or Inf.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    /// Invalid domain inputs (coordinates, config fields, preconditions).
    #[error("validation error: {0}")]
    Validation(String),

    /// Configuration file / flag problems.
    #[error("config error: {0}")]
    Config(String),

    /// A radius query matched no sensors.
    #[error("no covered sensors within {radius_km} km of venue {venue_id}")]
    NoCoveredSensors { venue_id: String, radius_km: f64 },

    /// Flow data does not cover a required span.
    #[error("flow coverage error: missing span {missing} for event {event_id}")]
    FlowCoverage { event_id: String, missing: String },

    /// Query-string grammar violation, with the byte offset of the failure.
    #[error("query parse error at offset {offset}: {message}")]
    QueryParse { offset: usize, message: String },

    /// An agent reply did not contain a required section.
    #[error("structured parse error: missing section {section:?} in reply:\n{reply}")]
    StructuredParse { section: String, reply: String },

    /// An agent reply was not the JSON the contract requires.
    #[error("malformed agent JSON ({message}); raw reply:\n{reply}")]
    AgentJson { message: String, reply: String },

    /// file_backed encoder had no vector for a key.
    #[error("missing embedding for event {event_id:?} category {category:?}")]
    MissingEmbedding { event_id: String, category: String },

    /// Completion backend failure (HTTP errors, timeouts, exhausted retries).
    #[error("backend error: {0}")]
    Backend(String),

    /// Agent pipeline failure wrapping the raw reply that caused it.
    #[error("pipeline error: {message}; raw reply:\n{reply}")]
    Pipeline { message: String, reply: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 0 success, 2 config, 3 data, 4 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation(_) => 2,
            Error::Backend(_) | Error::Pipeline { .. } => 4,
            _ => 3,
        }
    }
}
