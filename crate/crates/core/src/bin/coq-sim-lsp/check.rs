//! Runs a document sentence by sentence against the toy kernel.

use std::sync::Arc;

use serde_json::Value;

use crate::kernel::{Env, Global, KResult, Proof, Segment};
use crate::segment::{sentences, strip};
use crate::term::{Binder, Expr, Tm};
use crate::vernac::{self, Cmd, Ender};

pub trait Loader {
    /// Load the library matching logical name suffix `name`.
    fn load(&self, name: &str, stack: &[String]) -> KResult<(String, Arc<Env>)>;

    /// Environment every document starts from. `stack` holds the libraries
    /// currently being loaded.
    fn prelude(&self, _stack: &[String]) -> Option<Arc<Env>> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct SentenceOut {
    pub start: usize,
    pub end: usize,
    pub ast: Value,
    /// Proof state after the sentence, `null` outside proof mode.
    pub goals: Value,
    pub error: Option<String>,
}

pub struct Checker<'a> {
    pub env: Env,
    proofs: Vec<Proof>,
    loader: &'a dyn Loader,
    stack: Vec<String>,
}

pub fn check(text: &str, loader: &dyn Loader, stack: &[String], step_cost: std::time::Duration) -> (Env, Vec<SentenceOut>) {
    let mut env = Env::new();
    if let Some(p) = loader.prelude(stack) {
        env.absorb(&p);
    }
    let mut c = Checker { env, proofs: vec![], loader, stack: stack.to_vec() };
    let mut out = Vec::new();
    for s in sentences(text) {
        if !step_cost.is_zero() {
            std::thread::sleep(step_cost);
        }
        let raw = &text[s.start..s.end];
        let (ast, error) = if s.unterminated {
            (Value::Null, Some("Syntax error: '.' expected after [vernac:command] (in [vernac_aux]).".to_string()))
        } else {
            match vernac::parse(&strip(raw), &c.env.syntax) {
                Ok(cmd) => {
                    let ast = vernac::ast(&cmd);
                    (ast, c.exec(&cmd).err())
                }
                Err(e) => (Value::Null, Some(e)),
            }
        };
        let goals = c.proofs.last().map(|p| p.to_json(&c.env)).unwrap_or(Value::Null);
        out.push(SentenceOut { start: s.start, end: s.end, ast, goals, error });
    }
    (c.env, out)
}

fn implicit_names(binders: &[Binder], ty: &Expr) -> Vec<String> {
    let mut out: Vec<String> =
        binders.iter().filter(|b| b.implicit).flat_map(|b| b.names.iter().cloned()).collect();
    let mut cur = ty;
    while let Expr::Prod(bs, body) = cur {
        out.extend(bs.iter().filter(|b| b.implicit).flat_map(|b| b.names.iter().cloned()));
        cur = body;
    }
    out
}

fn with_binders(binders: &[Binder], ty: &Expr) -> Expr {
    if binders.is_empty() {
        ty.clone()
    } else {
        Expr::Prod(binders.to_vec(), Box::new(ty.clone()))
    }
}

fn all_names(binders: &[Binder]) -> Vec<String> {
    binders.iter().flat_map(|b| b.names.iter().cloned()).collect()
}

fn explicit_names(binders: &[Binder]) -> Vec<String> {
    binders.iter().filter(|b| !b.implicit).flat_map(|b| b.names.iter().cloned()).collect()
}

fn expr_mentions(e: &Expr, x: &str) -> bool {
    match e {
        Expr::Ref(q) => q == x,
        Expr::App(f, args) => expr_mentions(f, x) || args.iter().any(|a| expr_mentions(a, x)),
        Expr::Notation { args, .. } => args.iter().any(|a| expr_mentions(a, x)),
        Expr::Prod(bs, b) | Expr::Lam(bs, b) => {
            bs.iter().any(|bd| bd.ty.as_ref().is_some_and(|t| expr_mentions(t, x))) || expr_mentions(b, x)
        }
        Expr::Arrow(a, b) => expr_mentions(a, x) || expr_mentions(b, x),
        Expr::Match(s, bs) => expr_mentions(s, x) || bs.iter().any(|(_, r)| expr_mentions(r, x)),
        Expr::Hole | Expr::Sort(_) => false,
    }
}

impl Checker<'_> {
    fn proof(&mut self) -> KResult<&mut Proof> {
        self.proofs.last_mut().ok_or_else(|| "No focused proof (No proof-editing in progress).".to_string())
    }

    fn start_proof(&mut self, name: &str, binders: &[Binder], ty: &Expr) -> KResult<()> {
        if let Some(p) = self.proofs.last() {
            if !self.env.nested_proofs {
                return Err(format!(
                    "Nested statements are forbidden: proof of {} is still pending. Use \"Set Nested Proofs Allowed\" to allow them.",
                    p.name
                ));
            }
        }
        let stmt = self.env.elab(&with_binders(binders, ty), &[])?;
        let implicits = implicit_names(binders, ty);
        let key = self.env.qualify(name);
        if self.env.globals.contains_key(&key) {
            return Err(format!("{name} already exists."));
        }
        self.proofs.push(Proof::new(key, stmt, implicits));
        Ok(())
    }

    fn define(&mut self, name: &str, g: Global) -> KResult<String> {
        let key = self.env.qualify(name);
        if self.env.globals.contains_key(&key) {
            return Err(format!("{name} already exists."));
        }
        self.env.globals.insert(key.clone(), g);
        Ok(key)
    }

    fn exec(&mut self, cmd: &Cmd) -> KResult<()> {
        match cmd {
            Cmd::Require { from, libs, .. } => {
                for l in libs {
                    let name = match from {
                        Some(f) => format!("{f}.{l}"),
                        None => l.clone(),
                    };
                    let (logical, lib) = self.loader.load(&name, &self.stack)?;
                    self.env.absorb(&lib);
                    self.env.loaded.insert(logical);
                }
                Ok(())
            }
            Cmd::Import { mods, .. } => {
                for m in mods {
                    let path = self.env.module_path();
                    let local = (0..=path.len()).rev().find_map(|i| {
                        let cand = if i == 0 { m.clone() } else { format!("{}.{}", path[..i].join("."), m) };
                        self.env.modules_defined.contains(&cand).then_some(cand)
                    });
                    match local {
                        Some(full) => self.env.opened.push(full),
                        None if self.env.loaded.iter().any(|l| l == m || l.ends_with(&format!(".{m}"))) => {}
                        None => return Err(format!("Cannot find module {m}.")),
                    }
                }
                Ok(())
            }
            Cmd::Module { name, alias } => {
                let key = self.env.qualify(name);
                if let Some(a) = alias {
                    if !self.env.modules_defined.contains(a) {
                        return Err(format!("Cannot find module {a}."));
                    }
                    self.env.modules_defined.insert(key);
                    return Ok(());
                }
                self.env.modules_defined.insert(key);
                self.env.segments.push(Segment::Module(name.clone()));
                Ok(())
            }
            Cmd::Section(name) => {
                self.env.segments.push(Segment::Section(name.clone()));
                Ok(())
            }
            Cmd::End(name) => match self.env.segments.last() {
                Some(Segment::Module(n) | Segment::Section(n)) if n == name => {
                    self.env.segments.pop();
                    Ok(())
                }
                Some(Segment::Module(n) | Segment::Section(n)) => Err(format!("Last block to end has name {n}.")),
                None => Err("There is nothing to end.".into()),
            },
            Cmd::Theorem { name, binders, ty, .. } => self.start_proof(name, binders, ty),
            Cmd::Definition { name, binders, ty, body, .. } => match body {
                None => self.start_proof(name, binders, ty.as_ref().expect("parser guarantees a type")),
                Some(b) => {
                    let bound = all_names(binders);
                    if let Some(t) = ty {
                        self.env.elab(t, &bound)?;
                    }
                    let body = self.env.elab(b, &bound)?;
                    self.define(name, Global::Def { params: explicit_names(binders), body })?;
                    Ok(())
                }
            },
            Cmd::Fixpoint { co, name, binders, ty, body } => {
                let key = self.define(name, Global::Other)?;
                let bound = all_names(binders);
                let res = (|| {
                    if let Some(t) = ty {
                        self.env.elab(t, &bound)?;
                    }
                    self.env.elab(body, &bound)
                })();
                let body = match res {
                    Ok(b) => b,
                    Err(e) => {
                        self.env.globals.remove(&key);
                        return Err(e);
                    }
                };
                let params = explicit_names(binders);
                let struct_idx = match &body {
                    Tm::Match(s, _) if !co => match s.as_ref() {
                        Tm::Var(x) => params.iter().position(|p| p == x),
                        _ => None,
                    },
                    _ => None,
                };
                self.env.globals.insert(key, Global::Fix { params, struct_idx, body });
                Ok(())
            }
            Cmd::Inductive { name, binders, sort, ctors, .. } => {
                let params = all_names(binders);
                let prop = matches!(sort, Some(Expr::Sort(s)) if s == "Prop");
                let key = self.define(name, Global::Inductive { params: params.clone(), ctors: vec![], prop })?;
                let mut made: Vec<(String, Global)> = Vec::new();
                let res = (|| {
                    for c in ctors {
                        let mut bound = params.clone();
                        let mut args = Vec::new();
                        for b in &c.binders {
                            for n in &b.names {
                                let ty = match &b.ty {
                                    Some(t) => self.env.elab(t, &bound)?,
                                    None => Tm::Hole,
                                };
                                args.push((Some(n.clone()), ty));
                                bound.push(n.clone());
                            }
                        }
                        let mut cur = c.ty.clone();
                        loop {
                            match cur {
                                Some(Expr::Arrow(a, b)) => {
                                    args.push((None, self.env.elab(&a, &bound)?));
                                    cur = Some(*b);
                                }
                                Some(Expr::Prod(bs, b)) => {
                                    for bd in &bs {
                                        for n in &bd.names {
                                            let ty = match &bd.ty {
                                                Some(t) => self.env.elab(t, &bound)?,
                                                None => Tm::Hole,
                                            };
                                            args.push((Some(n.clone()), ty));
                                            bound.push(n.clone());
                                        }
                                    }
                                    cur = Some(*b);
                                }
                                Some(last) => {
                                    self.env.elab(&last, &bound)?;
                                    break;
                                }
                                None => break,
                            }
                        }
                        made.push((
                            self.env.qualify(&c.name),
                            Global::Ctor { ind: key.clone(), params: params.clone(), args },
                        ));
                    }
                    Ok(())
                })();
                if let Err(e) = res {
                    self.env.globals.remove(&key);
                    return Err(e);
                }
                let names: Vec<String> = made.iter().map(|m| m.0.clone()).collect();
                for (k, g) in made {
                    self.env.globals.insert(k, g);
                }
                self.env.globals.insert(key, Global::Inductive { params, ctors: names, prop });
                Ok(())
            }
            Cmd::Record { name, binders, sort, ctor, fields, .. } => {
                let params = all_names(binders);
                let prop = matches!(sort, Some(Expr::Sort(s)) if s == "Prop");
                let key = self.define(name, Global::Inductive { params: params.clone(), ctors: vec![], prop })?;
                let mut bound = params.clone();
                let mut args = Vec::new();
                for (f, t) in fields {
                    match self.env.elab(t, &bound) {
                        Ok(ty) => args.push((Some(f.clone()), ty)),
                        Err(e) => {
                            self.env.globals.remove(&key);
                            return Err(e);
                        }
                    }
                    bound.push(f.clone());
                }
                let cname = self.env.qualify(&ctor.clone().unwrap_or_else(|| format!("Build_{name}")));
                self.env.globals.insert(cname.clone(), Global::Ctor { ind: key.clone(), params: params.clone(), args });
                for (f, _) in fields {
                    self.env.globals.insert(self.env.qualify(f), Global::Other);
                }
                self.env.globals.insert(key, Global::Inductive { params, ctors: vec![cname], prop });
                Ok(())
            }
            Cmd::Instance { name, binders, ty, has_body } => {
                if *has_body {
                    self.env.elab(&with_binders(binders, ty), &[])?;
                    self.define(name, Global::Other)?;
                    Ok(())
                } else {
                    self.start_proof(name, binders, ty)
                }
            }
            Cmd::Assumption { names, ty, .. } => {
                let ty = self.env.elab(ty, &[])?;
                for n in names {
                    self.define(n, Global::Axiom { ty: ty.clone() })?;
                }
                Ok(())
            }
            Cmd::Notation { pattern, body, level, assoc, .. } => {
                let toks: Vec<&str> = pattern.split_whitespace().collect();
                let is_ident = |t: &str| {
                    t.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
                        && t.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '\'')
                };
                let params: Vec<String> =
                    toks.iter().filter(|t| is_ident(t) && expr_mentions(body, t)).map(|t| t.to_string()).collect();
                let key: Vec<String> = toks
                    .iter()
                    .map(|t| {
                        if params.iter().any(|p| p == t) {
                            "_".to_string()
                        } else {
                            t.trim_matches('\'').to_string()
                        }
                    })
                    .collect();
                let key = key.join(" ");
                let tm = self.env.elab(body, &params)?;
                if toks.len() == 3 && params.len() == 2 && params[0] == toks[0] && params[1] == toks[2] {
                    let op = toks[1].trim_matches('\'');
                    let level = level.unwrap_or(50);
                    let assoc = assoc.unwrap_or(crate::term::Assoc::Left);
                    self.env.syntax.add(op, level, assoc);
                    if let Tm::App(h, args) = &tm {
                        if let (Tm::Var(h), [Tm::Var(a), Tm::Var(b)]) = (h.as_ref(), args.as_slice()) {
                            if *a == params[0] && *b == params[1] {
                                self.env
                                    .printing
                                    .insert(h.clone(), crate::term::PrintInfix { op: op.to_string(), level, assoc });
                            }
                        }
                    }
                }
                self.env.notations.insert(key, crate::kernel::NotationDef { params, body: tm });
                Ok(())
            }
            Cmd::Ltac { name, tac } => {
                self.env.ltac.insert(name.clone(), tac.clone());
                Ok(())
            }
            Cmd::Proof => self.proof().map(|_| ()),
            Cmd::EndProof(ender) => {
                let p = self.proofs.pop().ok_or("No focused proof (No proof-editing in progress).")?;
                self.env
                    .globals
                    .insert(p.name.clone(), Global::Theorem { stmt: p.stmt.clone(), implicits: p.implicits.clone() });
                if *ender == Ender::Admitted {
                    return Ok(());
                }
                if !p.complete() {
                    return Err(" (in proof ".to_string()
                        + &p.name
                        + "): Attempt to save an incomplete proof (there are remaining open goals).");
                }
                if !p.given_up.is_empty() {
                    return Err("Attempt to save a proof with given up goals. If this is really what you want to do, use Admitted in place of Qed.".into());
                }
                Ok(())
            }
            Cmd::Abort => {
                self.proofs.pop().ok_or("No focused proof (No proof-editing in progress).")?;
                Ok(())
            }
            Cmd::Bullet(b) => self.proof()?.bullet(b),
            Cmd::OpenBrace => self.proof()?.open_brace(),
            Cmd::CloseBrace => self.proof()?.close_brace(),
            Cmd::Tactic(t) => {
                let env = &self.env;
                let p = self.proofs.last_mut().ok_or("No focused proof (No proof-editing in progress).")?;
                p.run(env, t)
            }
            Cmd::Check(e) => self.env.elab(e, &[]).map(|_| ()),
            Cmd::Set { names, unset } => {
                if names.iter().map(String::as_str).eq(["Nested", "Proofs", "Allowed"]) {
                    self.env.nested_proofs = !unset;
                }
                Ok(())
            }
            Cmd::OpenScope(_) | Cmd::Opaque(_) => Ok(()),
        }
    }
}

/// A loader with no libraries at all.
#[cfg(test)]
pub struct NoLibraries;

#[cfg(test)]
impl Loader for NoLibraries {
    fn load(&self, name: &str, _stack: &[String]) -> KResult<(String, Arc<Env>)> {
        Err(format!("Cannot find a physical path bound to logical path matching suffix {name}."))
    }
}

/// Libraries given as in-memory sources, for tests.
#[cfg(test)]
pub struct MemLoader(pub std::collections::HashMap<String, String>);

#[cfg(test)]
impl Loader for MemLoader {
    fn load(&self, name: &str, stack: &[String]) -> KResult<(String, Arc<Env>)> {
        let (logical, src) = self
            .0
            .iter()
            .find(|(k, _)| *k == name || k.ends_with(&format!(".{name}")))
            .ok_or_else(|| format!("Cannot find a physical path bound to logical path matching suffix {name}."))?;
        let mut st = stack.to_vec();
        st.push(logical.clone());
        let (mut env, _) = check(src, self, &st, std::time::Duration::ZERO);
        env.loaded.insert(logical.clone());
        Ok((logical.clone(), Arc::new(env)))
    }

    fn prelude(&self, stack: &[String]) -> Option<Arc<Env>> {
        if stack.iter().any(|s| s.starts_with("Coq.Init.")) || !self.0.contains_key("Coq.Init.Prelude") {
            return None;
        }
        self.load("Coq.Init.Prelude", stack).ok().map(|r| r.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    const PRELUDE: &str = include_str!("../../../tests/fixtures/coqlib/theories/Init/Prelude.v");
    const DATATYPES: &str = include_str!("../../../tests/fixtures/coqlib/theories/Init/Datatypes.v");
    const LIST: &str = include_str!("../../../tests/fixtures/coqlib/theories/Lists/List.v");
    const TEST_V: &str = include_str!("../../../tests/fixtures/sample/test.v");

    fn libs() -> MemLoader {
        let mut m = HashMap::new();
        m.insert("Coq.Init.Prelude".to_string(), PRELUDE.to_string());
        m.insert("Coq.Init.Datatypes".to_string(), DATATYPES.to_string());
        m.insert("Coq.Lists.List".to_string(), LIST.to_string());
        MemLoader(m)
    }

    fn errors(out: &[SentenceOut]) -> Vec<String> {
        out.iter().filter_map(|s| s.error.clone()).collect()
    }

    #[test]
    fn library_sources_check_cleanly() {
        let l = libs();
        let (_, out) = check(DATATYPES, &l, &["Coq.Init.Datatypes".into()], Default::default());
        assert_eq!(errors(&out), Vec::<String>::new());
        let (_, out) = check(LIST, &l, &[], Default::default());
        assert_eq!(errors(&out), Vec::<String>::new());
    }

    #[test]
    fn sample_goals() {
        let l = libs();
        let (_, out) = check(TEST_V, &l, &[], Default::default());
        assert_eq!(out.len(), 13);
        assert_eq!(errors(&out), Vec::<String>::new());
        // after `intros a l1 l2.`
        let g = &out[3].goals["goals"][0];
        assert_eq!(g["ty"], "rev (l1 ++ l2) = rev l2 ++ rev l1");
        assert_eq!(g["hyps"][0]["names"], serde_json::json!(["a"]));
        assert_eq!(g["hyps"][1]["names"], serde_json::json!(["l1", "l2"]));
        // after `induction l1; intros.`
        assert_eq!(out[4].goals["goals"].as_array().unwrap().len(), 2);
        assert_eq!(out[4].goals["goals"][0]["ty"], "rev (nil ++ l2) = rev l2 ++ rev nil");
        // before `rewrite app_nil_r.`
        assert_eq!(out[6].goals["goals"][0]["ty"], "rev l2 = rev l2 ++ nil");
        // after `rewrite IHl1.`
        assert_eq!(
            out[11].goals["goals"][0]["ty"],
            "(rev l2 ++ rev l1) ++ a0 :: nil = rev l2 ++ rev l1 ++ a0 :: nil"
        );
        assert!(out[12].goals.is_null());
    }

    #[test]
    fn repair_attempts() {
        let l = libs();
        let base = TEST_V.trim_end().strip_suffix("Admitted.").unwrap().to_string();
        let bad = format!("{base} reflexivity.\nQed.\n");
        let (_, out) = check(&bad, &l, &[], Default::default());
        assert_eq!(errors(&out).len(), 2, "{:?}", errors(&out));
        let good = format!("{base} rewrite app_assoc. reflexivity.\nQed.\n");
        let (_, out) = check(&good, &l, &[], Default::default());
        assert_eq!(errors(&out), Vec::<String>::new());
    }

    #[test]
    fn bogus_tactic_and_missing_import() {
        let l = libs();
        let (_, out) = check("Lemma x : True. Proof. frobnicate. Qed.", &l, &[], Default::default());
        assert_eq!(errors(&out).len(), 2);
        let no_req = TEST_V.replace("Require Import List.", "");
        let (_, out) = check(&no_req, &l, &[], Default::default());
        assert!(!errors(&out).is_empty());
    }

    #[test]
    fn false_is_not_reflexive() {
        let (_, out) = check("Lemma x : False. Proof. reflexivity. Qed.", &NoLibraries, &[], Default::default());
        assert_eq!(errors(&out).len(), 2);
    }

    #[test]
    fn modules_prefix_and_import() {
        let src = "Module M. Inductive t := A | B. Definition f (x : t) := x. End M. Check M.f. Import M. Check f.";
        let (env, out) = check(src, &NoLibraries, &[], Default::default());
        assert_eq!(errors(&out), Vec::<String>::new());
        assert!(env.globals.contains_key("M.f"));
        assert!(env.globals.contains_key("M.A"));
    }

    #[test]
    fn nested_proofs_need_flag() {
        let src = "Lemma a : True. Proof. Lemma b : True. Proof. exact I. Qed. exact I. Qed.";
        let (_, out) = check(src, &NoLibraries, &[], Default::default());
        assert!(!errors(&out).is_empty());
        let src = format!("Set Nested Proofs Allowed. {src}");
        let (_, out) = check(&src, &NoLibraries, &[], Default::default());
        assert_eq!(errors(&out), Vec::<String>::new());
    }

    #[test]
    fn bullets_and_braces() {
        let src = "Lemma x : True /\\ True. Proof. split. - exact I. - { exact I. } Qed.";
        let (_, out) = check(src, &NoLibraries, &[], Default::default());
        assert_eq!(errors(&out), Vec::<String>::new());
        let src = "Lemma x : True /\\ True. Proof. split. - exact I. Qed.";
        let (_, out) = check(src, &NoLibraries, &[], Default::default());
        assert_eq!(errors(&out).len(), 1);
    }
}
