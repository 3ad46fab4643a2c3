use std::path::PathBuf;

use crate::lsp::{Diagnostic, Position};
use crate::rpc::RpcError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Rpc(#[from] RpcError),
    #[error("initialize handshake failed: {0}")]
    Handshake(String),
    #[error("session is closed")]
    SessionClosed,
    #[error("document version {given} is not newer than {current}")]
    StaleVersion { given: i32, current: i32 },
    #[error("position {0:?} is outside the document")]
    PositionOutOfRange(Position),
    #[error("server refused to compile: {0}")]
    CompilationRefused(String),
    #[error("cannot move {requested} steps from pointer {pointer} in a file of {len} steps")]
    OutOfRange { requested: i64, pointer: i64, len: usize },
    #[error("step index {index} out of range for {len} steps")]
    IndexOutOfRange { index: i64, len: usize },
    #[error("change introduces {} new error(s); file reverted", .diagnostics.len())]
    InvalidChange { diagnostics: Vec<Diagnostic> },
    #[error("proof has no steps to pop")]
    EmptyProof,
    #[error("proof `{0}` does not belong to this file")]
    UnknownProof(String),
    #[error("unexpected server answer: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed dataset {path}: {reason}")]
    MalformedDataset { path: PathBuf, reason: String },
    #[error("operation cancelled")]
    Cancelled,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
