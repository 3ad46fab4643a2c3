//! JSON-RPC 2.0 over LSP base-protocol framing.

mod framing;
mod message;
mod transport;

use std::time::Duration;

pub use framing::{frame_message, parse_frames, FrameDecoder, FrameReader};
pub use message::{RequestId, ResponseError, RpcMessage};
pub use transport::{Transport, DEFAULT_TIMEOUT};

#[derive(Debug, thiserror::Error)]
pub enum RpcError {
    #[error("malformed frame header: {0}")]
    MalformedHeader(String),
    #[error("stream ended inside a frame ({buffered} bytes buffered)")]
    PrematureEof { buffered: usize },
    #[error("invalid JSON-RPC message: {0}")]
    InvalidMessage(String),
    #[error("server error {code}: {message}")]
    Server { code: i64, message: String, data: Option<serde_json::Value> },
    #[error("transport closed: {0}")]
    TransportClosed(String),
    #[error("request `{method}` timed out after {after:?}")]
    Timeout { method: String, after: Duration },
    #[error("could not start server: {0}")]
    Spawn(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ResponseError> for RpcError {
    fn from(e: ResponseError) -> Self {
        RpcError::Server { code: e.code, message: e.message, data: e.data }
    }
}
