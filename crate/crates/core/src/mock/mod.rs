//! Record a server conversation once, replay it without the server.
//!
//! A fixture is a list of entries, one per client message, keyed by method
//! and a digest of the normalized parameters. Replay hands out the first
//! unused entry that matches each incoming message, so repeated identical
//! requests are answered in recorded order.
//!
//! Normalization sorts object keys, blanks `version` and `processId`, and
//! replaces machine paths by placeholders: `${root}` for the workspace root
//! announced in `initialize`, plus any `NAME=PATH` given by the caller.

mod fixture;
mod record;
mod replay;

pub use fixture::{digest, Entry, Fixture, Match, Metadata, Notification, Substitutions, FIXTURE_FORMAT};
pub use record::record;
pub use replay::{replay, ReplayEnd, UNMATCHED_CODE};

use crate::rpc::RpcError;

#[derive(Debug, thiserror::Error)]
pub enum MockError {
    #[error("no fixture entry for {method} (digest {digest})")]
    Unmatched { method: String, digest: String },
    #[error("fixture entries for {method} (digest {digest}) are used up")]
    Exhausted { method: String, digest: String },
    #[error("no server command given")]
    NoCommand,
    #[error("could not start server: {0}")]
    Spawn(String),
    #[error(transparent)]
    Rpc(#[from] RpcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
