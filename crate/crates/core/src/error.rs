use std::fmt;

use crate::llm::LlmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A malformed or invalid record in a line-delimited input.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {} (record {id}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{} invalid record(s); first: {}", .0.len(), .0[0])]
    Records(Vec<RecordError>),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unresolved placeholder `{{{0}}}`")]
    Placeholder(String),
    #[error("checksum mismatch: expected {expected}, got {actual}")]
    Checksum { expected: String, actual: String },
    #[error("event {seq} already applied (cursor at {cursor})")]
    StaleEvent { seq: u64, cursor: u64 },
    #[error("event seq {seq} out of order after {previous}")]
    OutOfOrder { seq: u64, previous: u64 },
    #[error(transparent)]
    Llm(#[from] LlmError),
}
