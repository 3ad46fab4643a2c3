//! Programmatic access to Coq files through a coq-lsp compatible server.

pub mod ast;
pub mod config;
pub mod context;
pub mod document;
pub mod edit;
pub mod extract;
pub mod harvest;
pub mod goals;
pub mod loadpath;
pub mod lsp;
pub mod mock;
pub mod proof;
pub mod rpc;
pub mod stats;

mod error;

pub use document::{CoqFile, Step};
pub use edit::{Change, ProofChange};
pub use proof::{ProofFile, ProofStatus, ProofStep, ProofTerm};
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/navigation.md")]
    mod navigation {}
    #[doc = include_str!("../../../book/src/context.md")]
    mod context {}
    #[doc = include_str!("../../../book/src/editing.md")]
    mod editing {}
    #[doc = include_str!("../../../book/src/extraction.md")]
    mod extraction {}
    #[doc = include_str!("../../../book/src/mock.md")]
    mod mock {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
}
