//! Terms and the per-file index of everything defined up to the
//! execution point.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ast::{self, Reference, Segment, SegmentOp};
use crate::document::Step;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TermType {
    Theorem,
    Lemma,
    Definition,
    Fixpoint,
    CoFixpoint,
    Inductive,
    CoInductive,
    Record,
    Class,
    Instance,
    Notation,
    Tactic,
    Variant,
    Fact,
    Remark,
    Corollary,
    Proposition,
    Property,
    Obligation,
    Derive,
    Other,
}

impl TermType {
    /// Kinds whose statement is followed by an interactive proof.
    pub fn is_theorem_like(self) -> bool {
        matches!(
            self,
            TermType::Theorem
                | TermType::Lemma
                | TermType::Fact
                | TermType::Remark
                | TermType::Corollary
                | TermType::Proposition
                | TermType::Property
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    /// Fully qualified within its file: `M.N.x` for `x` defined in modules
    /// `M` and `N`. For notations, the pattern as written.
    pub name: String,
    #[serde(rename = "type")]
    pub term_type: TermType,
    pub step: Step,
    pub module_path: Vec<String>,
    /// Logical name of the library the term was harvested from; `None`
    /// for terms of the file itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    seq: u64,
    term: Term,
}

/// Names and notations visible at the execution point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileContext {
    terms: HashMap<String, Entry>,
    notations: HashMap<String, Entry>,
    open_scopes: Vec<String>,
    segments: Vec<Segment>,
    next_seq: u64,
}

/// What one step changed, with enough information to undo it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextDelta {
    pub added_terms: Vec<Term>,
    pub added_notations: Vec<Term>,
    pub module_ops: Vec<ModuleOp>,
    pub opened_scopes: Vec<String>,
    replaced_terms: Vec<(String, Option<Entry>)>,
    replaced_notations: Vec<(String, Option<Entry>)>,
    seq_before: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModuleOp {
    Push(Segment),
    Pop(Segment),
}

impl ContextDelta {
    pub fn is_empty(&self) -> bool {
        self.added_terms.is_empty()
            && self.added_notations.is_empty()
            && self.module_ops.is_empty()
            && self.opened_scopes.is_empty()
    }
}

impl FileContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Currently open modules, outermost first. Sections are not included.
    pub fn module_path(&self) -> Vec<String> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Module(m) => Some(m.clone()),
                Segment::Section(_) => None,
            })
            .collect()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn open_scopes(&self) -> &[String] {
        &self.open_scopes
    }

    pub fn len(&self) -> usize {
        self.terms.len() + self.notations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All named terms, in definition order.
    pub fn terms(&self) -> Vec<&Term> {
        let mut v: Vec<&Entry> = self.terms.values().collect();
        v.sort_by_key(|e| e.seq);
        v.into_iter().map(|e| &e.term).collect()
    }

    /// All notations, in definition order.
    pub fn notations(&self) -> Vec<&Term> {
        let mut v: Vec<&Entry> = self.notations.values().collect();
        v.sort_by_key(|e| e.seq);
        v.into_iter().map(|e| &e.term).collect()
    }

    fn insert_term(&mut self, term: Term, delta: &mut ContextDelta) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let prev = self.terms.insert(term.name.clone(), Entry { seq, term: term.clone() });
        delta.replaced_terms.push((term.name.clone(), prev));
        delta.added_terms.push(term);
    }

    fn insert_notation(&mut self, term: Term, delta: &mut ContextDelta) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let key = ast::notation_key(&term.name);
        let prev = self.notations.insert(key.clone(), Entry { seq, term: term.clone() });
        delta.replaced_notations.push((key, prev));
        delta.added_notations.push(term);
    }

    /// Add terms and notations that come from elsewhere, such as a
    /// harvested library. Names are kept as given.
    pub fn seed(&mut self, terms: impl IntoIterator<Item = Term>, notations: impl IntoIterator<Item = Term>) -> ContextDelta {
        let mut delta = ContextDelta { seq_before: self.next_seq, ..Default::default() };
        for t in terms {
            self.insert_term(t, &mut delta);
        }
        for n in notations {
            self.insert_notation(n, &mut delta);
        }
        delta
    }

    /// Record what `step` defines and apply it.
    pub fn define(&mut self, step: &Step) -> ContextDelta {
        let info = ast::analyze(&step.ast);
        let mut delta = ContextDelta { seq_before: self.next_seq, ..Default::default() };
        let module_path = self.module_path();
        let prefix = module_path.join(".");
        for (name, ty) in &info.defines {
            let full = if prefix.is_empty() { name.clone() } else { format!("{prefix}.{name}") };
            let term = Term {
                name: full,
                term_type: *ty,
                step: step.clone(),
                module_path: module_path.clone(),
                library: None,
            };
            self.insert_term(term, &mut delta);
        }
        if let Some(pattern) = &info.notation {
            let term = Term {
                name: pattern.clone(),
                term_type: TermType::Notation,
                step: step.clone(),
                module_path: module_path.clone(),
                library: None,
            };
            self.insert_notation(term, &mut delta);
        }
        for m in &info.imports {
            self.open_scopes.push(m.clone());
            delta.opened_scopes.push(m.clone());
        }
        match &info.segment {
            Some(SegmentOp::Begin(seg)) => {
                self.segments.push(seg.clone());
                delta.module_ops.push(ModuleOp::Push(seg.clone()));
            }
            Some(SegmentOp::End(name)) => {
                // A mismatched `End` is a Coq error and changes nothing.
                if self.segments.last().is_some_and(|s| s.name() == name) {
                    let seg = self.segments.pop().unwrap();
                    delta.module_ops.push(ModuleOp::Pop(seg));
                }
            }
            None => {}
        }
        delta
    }

    /// Undo a delta produced by `define` or `seed` on this context.
    /// Deltas must be undone in reverse order of application.
    pub fn unapply(&mut self, delta: &ContextDelta) {
        for op in delta.module_ops.iter().rev() {
            match op {
                ModuleOp::Push(_) => {
                    self.segments.pop();
                }
                ModuleOp::Pop(seg) => self.segments.push(seg.clone()),
            }
        }
        for _ in &delta.opened_scopes {
            self.open_scopes.pop();
        }
        for (key, prev) in delta.replaced_notations.iter().rev() {
            match prev {
                Some(e) => self.notations.insert(key.clone(), e.clone()),
                None => self.notations.remove(key),
            };
        }
        for (key, prev) in delta.replaced_terms.iter().rev() {
            match prev {
                Some(e) => self.terms.insert(key.clone(), e.clone()),
                None => self.terms.remove(key),
            };
        }
        self.next_seq = delta.seq_before;
    }

    /// Names under which `name` could be visible, most specific first.
    fn candidates(&self, name: &str) -> Vec<String> {
        let mut out = vec![name.to_string()];
        let path = self.module_path();
        for i in (1..=path.len()).rev() {
            out.push(format!("{}.{name}", path[..i].join(".")));
        }
        for scope in self.open_scopes.iter().rev() {
            out.push(format!("{scope}.{name}"));
            for i in (1..=path.len()).rev() {
                out.push(format!("{}.{scope}.{name}", path[..i].join(".")));
            }
        }
        out
    }

    fn most_recent(&self, names: &[String]) -> Option<&Term> {
        names.iter().filter_map(|n| self.terms.get(n)).max_by_key(|e| e.seq).map(|e| &e.term)
    }

    /// Resolve a possibly qualified name. Exact and scope-qualified
    /// matches come first, and among those the most recent definition
    /// wins. Failing that, the last component of a dotted name is tried
    /// the same way.
    pub fn lookup(&self, name: &str) -> Option<&Term> {
        if let Some(t) = self.most_recent(&self.candidates(name)) {
            return Some(t);
        }
        let (_, bare) = name.rsplit_once('.')?;
        self.most_recent(&self.candidates(bare))
    }

    /// Look a notation up by pattern, written either way (`x ++ y` or `_ ++ _`).
    pub fn lookup_notation(&self, pattern: &str) -> Option<&Term> {
        self.notations.get(&ast::notation_key(pattern)).map(|e| &e.term)
    }

    /// Terms a step refers to, deduplicated, in source order.
    pub fn step_context(&self, step: &Step) -> Vec<Term> {
        let mut seen: HashSet<(bool, String)> = HashSet::new();
        let mut out = Vec::new();
        for r in ast::references(&step.ast) {
            let (found, key) = match &r {
                Reference::Name(n) => (self.lookup(n), false),
                Reference::Notation(k) => (self.lookup_notation(k), true),
            };
            if let Some(t) = found {
                if seen.insert((key, t.name.clone())) {
                    out.push(t.clone());
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsp::{Position, Range};
    use serde_json::{json, Value};

    fn step(expr: Value) -> Step {
        Step {
            text: String::new(),
            ast: json!({"v": {"control": [], "attrs": [], "expr": expr}, "loc": null}),
            range: Range::new(Position::new(0, 0), Position::new(0, 0)),
        }
    }

    fn lid(n: &str) -> Value {
        json!({"v": ["Id", n], "loc": null})
    }

    fn q(n: &str) -> Value {
        let mut parts: Vec<&str> = n.split('.').collect();
        let last = parts.pop().unwrap();
        let dir: Vec<Value> = parts.iter().rev().map(|p| json!(["Id", p])).collect();
        json!(["Ser_Qualid", ["DirPath", dir], ["Id", last]])
    }

    fn definition(name: &str) -> Step {
        step(json!(["VernacSynPure", ["VernacDefinition", [["NoDischarge"], ["Definition"]], [{"v": ["Name", ["Id", name]], "loc": null}, null], ["DefineBody", [], null, {"v": ["CRef", q("O"), null]}, null]]]))
    }

    fn module(name: &str) -> Step {
        step(json!(["VernacSynterp", ["VernacDefineModule", null, lid(name), [], ["Check", []], []]]))
    }

    fn end(name: &str) -> Step {
        step(json!(["VernacSynterp", ["VernacEndSegment", lid(name)]]))
    }

    fn import(name: &str) -> Step {
        step(json!(["VernacSynterp", ["VernacImport", [["Import"], null], [[q(name), ["ImportAll"]]]]]))
    }

    fn notation(pat: &str) -> Step {
        step(json!(["VernacSynterp", ["VernacNotation", false, {"v": ["CRef", q("app"), null]}, [{"v": pat, "loc": null}, []], null]]))
    }

    #[test]
    fn lemma_is_defined() {
        let mut ctx = FileContext::new();
        let s = step(json!(["VernacSynPure", ["VernacStartTheoremProof", ["Lemma"], [[[lid("rev_append"), null], [[], null]]]]]));
        let d = ctx.define(&s);
        assert_eq!(d.added_terms.len(), 1);
        assert_eq!(d.added_terms[0].name, "rev_append");
        assert_eq!(d.added_terms[0].term_type, TermType::Lemma);
    }

    #[test]
    fn notation_indexed_by_pattern() {
        let mut ctx = FileContext::new();
        ctx.define(&notation("x ++ y"));
        assert_eq!(ctx.lookup_notation("x ++ y").unwrap().name, "x ++ y");
        assert_eq!(ctx.lookup_notation("_ ++ _").unwrap().name, "x ++ y");
        assert!(ctx.lookup("x ++ y").is_none());
    }

    #[test]
    fn modules_prefix_names_and_import_opens() {
        let mut ctx = FileContext::new();
        ctx.define(&module("M"));
        let d = ctx.define(&definition("f"));
        assert_eq!(d.added_terms[0].name, "M.f");
        assert_eq!(d.added_terms[0].module_path, vec!["M"]);
        // Inside M, `f` is visible unqualified.
        assert_eq!(ctx.lookup("f").unwrap().name, "M.f");
        ctx.define(&end("M"));
        assert!(ctx.lookup("f").is_none());
        ctx.define(&import("M"));
        assert_eq!(ctx.lookup("f"), ctx.lookup("M.f"));
    }

    #[test]
    fn undefined_is_absent() {
        assert!(FileContext::new().lookup("nope").is_none());
    }

    #[test]
    fn shadowing_prefers_most_recent() {
        let mut ctx = FileContext::new();
        ctx.define(&definition("f"));
        ctx.define(&module("M"));
        ctx.define(&definition("f"));
        ctx.define(&end("M"));
        assert_eq!(ctx.lookup("f").unwrap().name, "f");
        ctx.define(&import("M"));
        assert_eq!(ctx.lookup("f").unwrap().name, "M.f");
    }

    #[test]
    fn define_then_unapply_is_identity() {
        let steps = [module("M"), definition("f"), notation("x ++ y"), end("M"), import("M"), definition("f")];
        let mut ctx = FileContext::new();
        let mut snapshots = vec![ctx.clone()];
        let mut deltas = vec![];
        for s in &steps {
            deltas.push(ctx.define(s));
            snapshots.push(ctx.clone());
        }
        for d in deltas.iter().rev() {
            snapshots.pop();
            ctx.unapply(d);
            assert_eq!(&ctx, snapshots.last().unwrap());
        }
    }

    #[test]
    fn step_context_skips_locals_and_dedups() {
        let mut ctx = FileContext::new();
        ctx.define(&definition("rev"));
        ctx.define(&notation("x ++ y"));
        let s = step(json!(["VernacSynPure", ["VernacCheckMayEval", null, null,
            {"v": ["CApp", {"v": ["CRef", q("rev"), null]}, [[{"v": ["CNotation", null, [["InConstrEntry"], "_ ++ _"], [[{"v": ["CRef", q("l1"), null]}, {"v": ["CRef", q("rev"), null]}], [], [], []]]}, null]]]}]]));
        let names: Vec<String> = ctx.step_context(&s).into_iter().map(|t| t.name).collect();
        assert_eq!(names, vec!["rev", "x ++ y"]);
        assert_eq!(ctx.step_context(&s), ctx.step_context(&s));
    }

    #[test]
    fn qualified_library_name_falls_back_to_bare() {
        let mut ctx = FileContext::new();
        ctx.seed([Term {
            name: "app_nil_r".into(),
            term_type: TermType::Theorem,
            step: definition("x"),
            module_path: vec![],
            library: Some("Coq.Lists.List".into()),
        }], []);
        assert_eq!(ctx.lookup("List.app_nil_r").unwrap().name, "app_nil_r");
    }
}
