//! A Coq file as an ordered list of steps with an execution pointer.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Config;
use crate::context::{ContextDelta, FileContext, Term};
use crate::lsp::{Diagnostic, DocumentHandle, Range, RawSpan, Session};
use crate::{Error, Result};

/// One sentence of the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// The sentence with the whitespace and comments that precede it.
    pub text: String,
    pub ast: Value,
    /// Range of the sentence proper, without the leading whitespace.
    pub range: Range,
}

/// Directory holding `_CoqProject` above `path`, else the file's directory.
pub fn workspace_root(path: &Path) -> PathBuf {
    let abs = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
    let start = abs.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let mut dir = Some(start.as_path());
    while let Some(d) = dir {
        if d.join("_CoqProject").is_file() {
            return d.to_path_buf();
        }
        dir = d.parent();
    }
    start
}

/// Split the document into steps. Each step owns the text between the end
/// of the previous sentence and the end of its own; whatever follows the last
/// sentence is returned separately.
pub(crate) fn steps_from_spans(text: &str, index: &crate::lsp::LineIndex, spans: Vec<RawSpan>) -> (Vec<Step>, String) {
    let mut steps = Vec::with_capacity(spans.len());
    let mut prev = 0;
    for span in spans {
        let end = index.offset(span.range.end).unwrap_or(text.len());
        let start = prev.min(end);
        steps.push(Step { text: text[start..end].to_string(), ast: span.ast, range: span.range });
        prev = end;
    }
    (steps, text[prev.min(text.len())..].to_string())
}

pub struct CoqFile {
    pub(crate) path: PathBuf,
    pub(crate) config: Config,
    pub(crate) session: Arc<Session>,
    pub(crate) handle: DocumentHandle,
    pub(crate) steps: Vec<Step>,
    pub(crate) tail: String,
    pub(crate) pointer: i64,
    pub(crate) diagnostics: Vec<Diagnostic>,
    pub(crate) context: FileContext,
    pub(crate) journal: Vec<ContextDelta>,
}

impl std::fmt::Debug for CoqFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoqFile")
            .field("path", &self.path)
            .field("steps", &self.steps.len())
            .field("pointer", &self.pointer)
            .finish()
    }
}

impl CoqFile {
    /// Open `path`, starting a server session rooted at its workspace.
    pub fn open(path: impl AsRef<Path>, config: &Config) -> Result<Self> {
        let path = path.as_ref();
        let root = workspace_root(path);
        let session = Arc::new(Session::start(config, &root)?);
        Self::open_in(session, path, config)
    }

    /// Open `path` on an existing session.
    pub fn open_in(session: Arc<Session>, path: impl AsRef<Path>, config: &Config) -> Result<Self> {
        let path = std::path::absolute(path.as_ref())?;
        let text = std::fs::read_to_string(&path)?;
        let handle = session.open_document(&path, &text)?;
        let diagnostics = session.diagnostics(&handle)?;
        let spans = session.request_spans(&handle)?;
        let (steps, tail) = steps_from_spans(&text, handle.index(), spans);
        Ok(CoqFile {
            path,
            config: config.clone(),
            session,
            handle,
            steps,
            tail,
            pointer: -1,
            diagnostics,
            context: FileContext::new(),
            journal: vec![],
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn text(&self) -> &str {
        self.handle.text()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Index of the last executed step; -1 before the first.
    pub fn pointer(&self) -> i64 {
        self.pointer
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }

    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn context(&self) -> &FileContext {
        &self.context
    }

    pub fn session(&self) -> &Arc<Session> {
        &self.session
    }

    pub fn handle(&self) -> &DocumentHandle {
        &self.handle
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Terms referenced by `step` that are visible in the current context.
    pub fn step_context(&self, step: &Step) -> Vec<Term> {
        self.context.step_context(step)
    }

    pub(crate) fn check_exec(&self, n: i64) -> Result<()> {
        let target = self.pointer + n;
        if target < -1 || target >= self.steps.len() as i64 {
            return Err(Error::OutOfRange { requested: n, pointer: self.pointer, len: self.steps.len() });
        }
        Ok(())
    }

    /// Execute the next step, returning its index.
    pub(crate) fn step_forward(&mut self) -> usize {
        let i = (self.pointer + 1) as usize;
        let delta = self.context.define(&self.steps[i]);
        self.journal.push(delta);
        self.pointer += 1;
        i
    }

    /// Undo the last executed step, returning its index.
    pub(crate) fn step_backward(&mut self) -> usize {
        let i = self.pointer as usize;
        let delta = self.journal.pop().expect("journal matches pointer");
        self.context.unapply(&delta);
        self.pointer -= 1;
        i
    }

    /// Move the pointer by `n` steps. Returns the steps executed, or for a
    /// negative `n` the steps undone, last first.
    pub fn exec(&mut self, n: i64) -> Result<Vec<Step>> {
        self.check_exec(n)?;
        let mut out = Vec::with_capacity(n.unsigned_abs() as usize);
        for _ in 0..n.unsigned_abs() {
            let i = if n > 0 { self.step_forward() } else { self.step_backward() };
            out.push(self.steps[i].clone());
        }
        Ok(out)
    }

    /// Execute up to and including step `index` (-1 to rewind fully).
    pub fn exec_to(&mut self, index: i64) -> Result<Vec<Step>> {
        self.exec(index - self.pointer)
    }

    /// Write the compiled `.vo` next to the source.
    pub fn compile(&self) -> Result<PathBuf> {
        self.session.save_compiled(&self.handle)
    }

    /// Replace the step list after the text changed. The pointer must not
    /// be past the unchanged prefix.
    pub(crate) fn install(&mut self, steps: Vec<Step>, tail: String, diagnostics: Vec<Diagnostic>) {
        debug_assert!(self.pointer < steps.len() as i64);
        self.steps = steps;
        self.tail = tail;
        self.diagnostics = diagnostics;
    }
}

impl Drop for CoqFile {
    fn drop(&mut self) {
        let _ = self.session.close_document(self.handle.clone());
    }
}
