//! Proof tracking on top of [`CoqFile`]: goals before every proof step,
//! premise context, and the terms of `Require`d libraries.

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ast::{self, ProofEnd};
use crate::config::{Config, GoalMode};
use crate::context::{FileContext, Term, TermType};
use crate::document::{CoqFile, Step};
use crate::goals::GoalAnswer;
use crate::harvest::{required_names, Harvester, Library};
use crate::loadpath::LoadPath;
use crate::lsp::{Diagnostic, Position};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProofStatus {
    Open,
    Closed,
    Admitted,
}

/// A step inside a proof, with the goals as they were before it ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofStep {
    pub step: Step,
    pub goals: GoalAnswer,
    pub context: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofTerm {
    /// The statement.
    pub term: Term,
    pub statement_context: Vec<Term>,
    /// From `Proof.` (or the first tactic) through the closing command.
    pub steps: Vec<ProofStep>,
    pub status: ProofStatus,
    #[serde(skip)]
    pub(crate) statement_index: usize,
    #[serde(skip)]
    pub(crate) step_indices: Vec<usize>,
}

impl ProofTerm {
    pub fn name(&self) -> &str {
        &self.term.name
    }

    /// Index of the statement in the file's step list.
    pub fn statement_index(&self) -> usize {
        self.statement_index
    }

    /// Indices of the proof steps in the file's step list.
    pub fn step_indices(&self) -> &[usize] {
        &self.step_indices
    }
}

/// What executing one step did to the proof bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
struct ProofOps {
    recorded_in: Option<usize>,
    closed: Option<usize>,
    started: bool,
}

pub struct ProofFile {
    pub(crate) file: CoqFile,
    loadpath: LoadPath,
    libraries: HashMap<PathBuf, Arc<Library>>,
    seeded: Vec<String>,
    harvested: Vec<Arc<Library>>,
    warnings: Vec<String>,
    proofs: Vec<ProofTerm>,
    open: Vec<usize>,
    ops: Vec<ProofOps>,
    /// Goals after step `p`, keyed by `p`.
    goals_after: RefCell<HashMap<usize, GoalAnswer>>,
}

impl std::fmt::Debug for ProofFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProofFile")
            .field("file", &self.file)
            .field("proofs", &self.proofs.len())
            .field("open", &self.open)
            .finish()
    }
}

impl ProofFile {
    pub fn open(path: impl AsRef<Path>, config: &Config) -> Result<Self> {
        Self::from_file(CoqFile::open(path, config)?)
    }

    /// Wrap an open, unexecuted file.
    pub fn from_file(file: CoqFile) -> Result<Self> {
        if file.pointer() != -1 {
            return Err(Error::Protocol("ProofFile needs a file with nothing executed".into()));
        }
        let loadpath = LoadPath::for_workspace(file.session().root(), file.config());
        let mut pf = ProofFile {
            file,
            loadpath,
            libraries: HashMap::new(),
            seeded: vec![],
            harvested: vec![],
            warnings: vec![],
            proofs: vec![],
            open: vec![],
            ops: vec![],
            goals_after: RefCell::new(HashMap::new()),
        };
        pf.seed();
        Ok(pf)
    }

    /// Rebuild the base context from the file's `Require`s. Only valid
    /// with the pointer at -1.
    fn seed(&mut self) {
        debug_assert_eq!(self.file.pointer, -1);
        let requires = required_names(&self.file.steps);
        let cache = self.file.config.workspace.cache_dir.clone();
        let session = self.file.session.clone();
        let harvest = Harvester::new(&session, &self.loadpath, cache, &mut self.libraries).harvest(&requires);
        let mut ctx = FileContext::new();
        for lib in &harvest.libraries {
            ctx.seed(lib.terms.iter().cloned(), lib.notations.iter().cloned());
        }
        self.file.context = ctx;
        self.file.journal.clear();
        self.seeded = requires;
        self.harvested = harvest.libraries;
        self.warnings = harvest.warnings;
    }

    pub fn file(&self) -> &CoqFile {
        &self.file
    }

    pub fn path(&self) -> &Path {
        self.file.path()
    }

    pub fn text(&self) -> &str {
        self.file.text()
    }

    pub fn steps(&self) -> &[Step] {
        self.file.steps()
    }

    pub fn pointer(&self) -> i64 {
        self.file.pointer()
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        self.file.diagnostics()
    }

    pub fn is_valid(&self) -> bool {
        self.file.is_valid()
    }

    pub fn context(&self) -> &FileContext {
        self.file.context()
    }

    pub fn loadpath(&self) -> &LoadPath {
        &self.loadpath
    }

    /// Libraries whose terms seed the context, dependencies first.
    pub fn libraries(&self) -> &[Arc<Library>] {
        &self.harvested
    }

    /// Imports that could not be harvested.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Every proof whose statement has been executed, in statement order.
    pub fn proofs(&self) -> &[ProofTerm] {
        &self.proofs
    }

    pub fn open_proofs(&self) -> Vec<&ProofTerm> {
        self.open.iter().map(|&i| &self.proofs[i]).collect()
    }

    /// Proofs that are still open or were admitted.
    pub fn unproven_proofs(&self) -> Vec<&ProofTerm> {
        self.proofs.iter().filter(|p| p.status != ProofStatus::Closed).collect()
    }

    pub fn proof(&self, name: &str) -> Option<&ProofTerm> {
        self.proofs.iter().find(|p| p.term.name == name)
    }

    fn position_after(&self, p: i64) -> Position {
        if p < 0 {
            Position::new(0, 0)
        } else {
            self.file.steps[p as usize].range.end
        }
    }

    /// Goals after step `p`; -1 is the start of the file.
    pub(crate) fn goals_after(&self, p: i64) -> Result<GoalAnswer> {
        let position = self.position_after(p);
        if p < 0 {
            return Ok(GoalAnswer::empty(position));
        }
        if let Some(g) = self.goals_after.borrow().get(&(p as usize)) {
            return Ok(g.clone());
        }
        let g = self.file.session.request_goals_with(&self.file.handle, position, GoalMode::Prev)?;
        self.goals_after.borrow_mut().insert(p as usize, g.clone());
        Ok(g)
    }

    /// Goals at the pointer.
    pub fn current_goals(&self) -> Result<GoalAnswer> {
        self.goals_after(self.file.pointer)
    }

    pub fn in_proof(&self) -> bool {
        !self.open.is_empty() || self.current_goals().is_ok_and(|g| !g.is_empty())
    }

    fn forward(&mut self) -> Result<usize> {
        let i = (self.file.pointer + 1) as usize;
        let step = self.file.steps[i].clone();
        let info = ast::analyze(&step.ast);
        let context = self.file.context.step_context(&step);
        let goals = if !self.open.is_empty() && !info.starts_proof {
            Some(self.goals_after(i as i64 - 1)?)
        } else {
            None
        };
        self.file.step_forward();
        let mut ops = ProofOps::default();
        if let Some(goals) = goals {
            let idx = *self.open.last().unwrap();
            let proof = &mut self.proofs[idx];
            proof.steps.push(ProofStep { step: step.clone(), goals, context: context.clone() });
            proof.step_indices.push(i);
            ops.recorded_in = Some(idx);
        }
        if let Some(end) = info.ends_proof {
            if let Some(idx) = self.open.pop() {
                self.proofs[idx].status = match end {
                    ProofEnd::Closed => ProofStatus::Closed,
                    ProofEnd::Admitted | ProofEnd::Aborted => ProofStatus::Admitted,
                };
                ops.closed = Some(idx);
            }
        }
        if info.starts_proof {
            let delta = self.file.journal.last().expect("just executed");
            let term = delta.added_terms.first().cloned().unwrap_or_else(|| Term {
                name: info.defines.first().map(|d| d.0.clone()).unwrap_or_else(|| "Unnamed_thm".into()),
                term_type: info.defines.first().map(|d| d.1).unwrap_or(TermType::Other),
                step: step.clone(),
                module_path: self.file.context.module_path(),
                library: None,
            });
            self.proofs.push(ProofTerm {
                term,
                statement_context: context,
                steps: vec![],
                status: ProofStatus::Open,
                statement_index: i,
                step_indices: vec![],
            });
            self.open.push(self.proofs.len() - 1);
            ops.started = true;
        }
        self.ops.push(ops);
        Ok(i)
    }

    fn backward(&mut self) -> usize {
        let ops = self.ops.pop().expect("ops match pointer");
        if ops.started {
            self.proofs.pop();
            self.open.pop();
        }
        if let Some(idx) = ops.closed {
            self.proofs[idx].status = ProofStatus::Open;
            self.open.push(idx);
        }
        if let Some(idx) = ops.recorded_in {
            self.proofs[idx].steps.pop();
            self.proofs[idx].step_indices.pop();
        }
        self.file.step_backward()
    }

    /// Move the pointer by `n` steps, keeping proofs in sync. A failed
    /// goal query stops forward execution at the step before it.
    pub fn exec(&mut self, n: i64) -> Result<Vec<Step>> {
        self.file.check_exec(n)?;
        let mut out = Vec::with_capacity(n.unsigned_abs() as usize);
        for _ in 0..n.unsigned_abs() {
            let i = if n > 0 { self.forward()? } else { self.backward() };
            out.push(self.file.steps[i].clone());
        }
        Ok(out)
    }

    pub fn exec_to(&mut self, index: i64) -> Result<Vec<Step>> {
        self.exec(index - self.file.pointer)
    }

    pub fn step_context(&self, step: &Step) -> Vec<Term> {
        self.file.step_context(step)
    }

    pub fn compile(&self) -> Result<PathBuf> {
        self.file.compile()
    }

    /// Called by the edit engine with the pointer inside the unchanged prefix.
    pub(crate) fn install(&mut self, steps: Vec<Step>, tail: String, diagnostics: Vec<Diagnostic>, first_diff: usize) {
        let reseed = required_names(&steps) != self.seeded;
        if reseed {
            while self.file.pointer >= 0 {
                self.backward();
            }
        }
        self.goals_after.borrow_mut().retain(|&p, _| p < first_diff);
        self.file.install(steps, tail, diagnostics);
        if reseed {
            self.seed();
        }
    }
}
