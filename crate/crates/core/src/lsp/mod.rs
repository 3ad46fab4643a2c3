//! LSP lifecycle and the coq-lsp extension requests.

mod session;
mod text;
mod types;

pub use session::{path_to_uri, DocumentHandle, Session};
pub use text::{utf16_to_utf8_col, utf8_to_utf16_col, LineIndex};
pub use types::{Diagnostic, Position, Range, RawSpan, Severity};
