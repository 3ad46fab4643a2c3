//! Transactional edits of step lists.
//!
//! A transaction is applied to an offline copy of the text, checked once,
//! and then either committed or rolled back. Indices are read against the
//! step list as it evolves through the transaction, so
//! `[Add { previous_step_index: 2, .. }, Delete { step_index: 3 }]` deletes
//! the step it just added. Text added in one `Add` counts as a single step
//! for later changes in the same transaction, whatever it contains.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::context::FileContext;
use crate::document::{steps_from_spans, CoqFile, Step};
use crate::lsp::{Diagnostic, LineIndex};
use crate::proof::{ProofFile, ProofTerm};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Change {
    /// Insert `text` after step `previous_step_index` (-1 for the start).
    Add { previous_step_index: i64, text: String },
    Delete { step_index: i64 },
}

impl Change {
    pub fn add(previous_step_index: i64, text: impl Into<String>) -> Self {
        Change::Add { previous_step_index, text: text.into() }
    }

    pub fn delete(step_index: i64) -> Self {
        Change::Delete { step_index }
    }
}

/// An edit at the end of one proof.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProofChange {
    Append { text: String },
    Pop,
}

impl ProofChange {
    pub fn append(text: impl Into<String>) -> Self {
        ProofChange::Append { text: text.into() }
    }
}

/// Everything an edit may touch, for comparing states.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub text: String,
    pub disk_text: Option<String>,
    pub steps: Vec<Step>,
    pub pointer: i64,
    pub diagnostics: Vec<Diagnostic>,
    pub context: FileContext,
    pub proofs: Vec<ProofTerm>,
}

/// A file whose steps can be edited and re-executed.
pub trait Navigable {
    fn coq_file(&self) -> &CoqFile;
    fn coq_file_mut(&mut self) -> &mut CoqFile;
    fn exec_steps(&mut self, n: i64) -> Result<Vec<Step>>;
    /// Swap in the re-segmented steps. The pointer is below `first_diff`.
    fn install_steps(&mut self, steps: Vec<Step>, tail: String, diagnostics: Vec<Diagnostic>, first_diff: usize);
    fn proof_terms(&self) -> &[ProofTerm] {
        &[]
    }

    fn snapshot(&self) -> Snapshot {
        let f = self.coq_file();
        Snapshot {
            text: f.text().to_string(),
            disk_text: std::fs::read_to_string(f.path()).ok(),
            steps: f.steps().to_vec(),
            pointer: f.pointer(),
            diagnostics: f.diagnostics().to_vec(),
            context: f.context().clone(),
            proofs: self.proof_terms().to_vec(),
        }
    }
}

impl Navigable for CoqFile {
    fn coq_file(&self) -> &CoqFile {
        self
    }

    fn coq_file_mut(&mut self) -> &mut CoqFile {
        self
    }

    fn exec_steps(&mut self, n: i64) -> Result<Vec<Step>> {
        self.exec(n)
    }

    fn install_steps(&mut self, steps: Vec<Step>, tail: String, diagnostics: Vec<Diagnostic>, _first_diff: usize) {
        self.install(steps, tail, diagnostics)
    }
}

impl Navigable for ProofFile {
    fn coq_file(&self) -> &CoqFile {
        &self.file
    }

    fn coq_file_mut(&mut self) -> &mut CoqFile {
        &mut self.file
    }

    fn exec_steps(&mut self, n: i64) -> Result<Vec<Step>> {
        self.exec(n)
    }

    fn install_steps(&mut self, steps: Vec<Step>, tail: String, diagnostics: Vec<Diagnostic>, first_diff: usize) {
        self.install(steps, tail, diagnostics, first_diff)
    }

    fn proof_terms(&self) -> &[ProofTerm] {
        self.proofs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Origin {
    Step(usize),
    New,
    Tail,
}

/// An error diagnostic located relative to the piece of text it falls in,
/// so that it compares equal across edits elsewhere in the file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Located {
    message: String,
    origin: Origin,
    start: usize,
    end: usize,
}

struct Layout {
    /// (origin, start offset, end offset) of every piece, then the tail.
    pieces: Vec<(Origin, usize, usize)>,
}

impl Layout {
    fn new<'a>(pieces: impl Iterator<Item = (Origin, &'a str)>) -> Self {
        let mut out = vec![];
        let mut off = 0;
        for (origin, text) in pieces {
            out.push((origin, off, off + text.len()));
            off += text.len();
        }
        out.push((Origin::Tail, off, usize::MAX));
        Layout { pieces: out }
    }

    fn locate(&self, index: &LineIndex, d: &Diagnostic) -> Located {
        let start = index.offset(d.range.start).unwrap_or(usize::MAX);
        let end = index.offset(d.range.end).unwrap_or(start);
        let &(origin, base, _) = self.pieces.iter().find(|p| start < p.2).unwrap_or(self.pieces.last().unwrap());
        Located {
            message: d.message.clone(),
            origin,
            start: start.saturating_sub(base),
            end: end.saturating_sub(base),
        }
    }
}

fn error_counts(layout: &Layout, index: &LineIndex, diags: &[Diagnostic]) -> HashMap<Located, usize> {
    let mut out = HashMap::new();
    for d in diags.iter().filter(|d| d.is_error()) {
        *out.entry(layout.locate(index, d)).or_insert(0) += 1;
    }
    out
}

/// Apply `changes` as one transaction.
pub fn change_steps<N: Navigable + ?Sized>(nav: &mut N, changes: &[Change]) -> Result<()> {
    if changes.is_empty() {
        return Ok(());
    }
    let file = nav.coq_file();
    let mut pieces: Vec<(Origin, String)> =
        file.steps.iter().enumerate().map(|(i, s)| (Origin::Step(i), s.text.clone())).collect();
    let mut ptr = file.pointer;
    for c in changes {
        match c {
            Change::Add { previous_step_index: prev, text } => {
                if *prev < -1 || *prev >= pieces.len() as i64 {
                    return Err(Error::IndexOutOfRange { index: *prev, len: pieces.len() });
                }
                pieces.insert((*prev + 1) as usize, (Origin::New, text.clone()));
                // Text added right after the last executed step is executed
                // too, unless nothing was.
                if *prev < ptr || (*prev == ptr && ptr >= 0) {
                    ptr += 1;
                }
            }
            Change::Delete { step_index: i } => {
                if *i < 0 || *i >= pieces.len() as i64 {
                    return Err(Error::IndexOutOfRange { index: *i, len: pieces.len() });
                }
                pieces.remove(*i as usize);
                if *i <= ptr {
                    ptr -= 1;
                }
            }
        }
    }
    let pointer_end: usize = pieces.iter().take((ptr + 1) as usize).map(|p| p.1.len()).sum();
    let mut new_text: String = pieces.iter().map(|p| p.1.as_str()).collect();
    new_text.push_str(&file.tail);

    let old_text = file.text().to_string();
    let old_layout = Layout::new(file.steps.iter().enumerate().map(|(i, s)| (Origin::Step(i), s.text.as_str())));
    let baseline = error_counts(&old_layout, file.handle.index(), &file.diagnostics);
    let new_layout = Layout::new(pieces.iter().map(|p| (p.0, p.1.as_str())));

    let session = file.session.clone();
    let path = file.path.clone();
    let in_memory = file.config.edit.in_memory;
    let handle = &mut nav.coq_file_mut().handle;
    let version = handle.version();
    session.update_document(handle, &new_text, version + 1)?;
    let diagnostics = session.diagnostics(handle)?;
    let after = error_counts(&new_layout, handle.index(), &diagnostics);

    let index = handle.index().clone();
    let introduced: Vec<Diagnostic> = diagnostics
        .iter()
        .filter(|d| d.is_error())
        .filter(|d| {
            let k = new_layout.locate(&index, d);
            after[&k] > baseline.get(&k).copied().unwrap_or(0)
        })
        .cloned()
        .collect();
    let grew = !introduced.is_empty();
    let write_err = if grew || in_memory { None } else { std::fs::write(&path, &new_text).err() };
    if grew || write_err.is_some() {
        session.update_document(handle, &old_text, version + 2)?;
        session.diagnostics(handle)?;
        if let Some(e) = write_err {
            return Err(e.into());
        }
        return Err(Error::InvalidChange { diagnostics: introduced });
    }

    let spans = session.request_spans(handle)?;
    let (steps, tail) = steps_from_spans(&new_text, &index, spans);
    let target = steps
        .iter()
        .take_while(|s| index.offset(s.range.end).unwrap_or(usize::MAX) <= pointer_end)
        .count() as i64
        - 1;
    let file = nav.coq_file();
    let first_diff = file.steps.iter().zip(&steps).position(|(a, b)| a != b).unwrap_or(file.steps.len().min(steps.len()));
    let keep = file.pointer.min(first_diff as i64 - 1);
    nav.exec_steps(keep - nav.coq_file().pointer)?;
    nav.install_steps(steps, tail, diagnostics, first_diff);
    nav.exec_steps(target - nav.coq_file().pointer)?;
    Ok(())
}

fn proof_changes(proof: &ProofTerm, changes: &[ProofChange]) -> Result<Vec<Change>> {
    let mut tail: Vec<i64> = std::iter::once(proof.statement_index)
        .chain(proof.step_indices.iter().copied())
        .map(|i| i as i64)
        .collect();
    let mut out = Vec::with_capacity(changes.len());
    for c in changes {
        match c {
            ProofChange::Pop => {
                if tail.len() == 1 {
                    return Err(Error::EmptyProof);
                }
                out.push(Change::delete(tail.pop().unwrap()));
            }
            ProofChange::Append { text } => {
                let last = *tail.last().unwrap();
                out.push(Change::add(last, text.clone()));
                tail.push(last + 1);
            }
        }
    }
    Ok(out)
}

impl CoqFile {
    pub fn add_step(&mut self, previous_step_index: i64, text: &str) -> Result<()> {
        change_steps(self, &[Change::add(previous_step_index, text)])
    }

    pub fn delete_step(&mut self, step_index: i64) -> Result<()> {
        change_steps(self, &[Change::delete(step_index)])
    }

    pub fn change_steps(&mut self, changes: &[Change]) -> Result<()> {
        change_steps(self, changes)
    }

    pub fn snapshot(&self) -> Snapshot {
        Navigable::snapshot(self)
    }
}

impl ProofFile {
    pub fn add_step(&mut self, previous_step_index: i64, text: &str) -> Result<()> {
        change_steps(self, &[Change::add(previous_step_index, text)])
    }

    pub fn delete_step(&mut self, step_index: i64) -> Result<()> {
        change_steps(self, &[Change::delete(step_index)])
    }

    pub fn change_steps(&mut self, changes: &[Change]) -> Result<()> {
        change_steps(self, changes)
    }

    /// Apply proof-local changes to the proof named `proof`.
    pub fn change_proof(&mut self, proof: &str, changes: &[ProofChange]) -> Result<()> {
        let term = self.proof(proof).ok_or_else(|| Error::UnknownProof(proof.to_string()))?;
        let changes = proof_changes(term, changes)?;
        change_steps(self, &changes)
    }

    pub fn append_step(&mut self, proof: &str, text: &str) -> Result<()> {
        self.change_proof(proof, &[ProofChange::append(text)])
    }

    pub fn pop_step(&mut self, proof: &str) -> Result<()> {
        self.change_proof(proof, &[ProofChange::Pop])
    }

    pub fn snapshot(&self) -> Snapshot {
        Navigable::snapshot(self)
    }
}
