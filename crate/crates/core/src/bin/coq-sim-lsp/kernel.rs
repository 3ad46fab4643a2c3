//! A deliberately small, untyped proof kernel: enough conversion, rewriting
//! and goal management to make realistic proof scripts behave like Coq's
//! on the examples the tool is exercised with.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde_json::{json, Value};

use crate::term::{pat_vars, print, Assoc, Binder, Expr, Pat, PrintEnv, PrintInfix, Syntax, Tm};

#[derive(Debug, Clone)]
pub enum Global {
    Inductive { params: Vec<String>, ctors: Vec<String>, prop: bool },
    Ctor { ind: String, params: Vec<String>, args: Vec<(Option<String>, Tm)> },
    Def { params: Vec<String>, body: Tm },
    Fix { params: Vec<String>, struct_idx: Option<usize>, body: Tm },
    Theorem { stmt: Tm, implicits: Vec<String> },
    Axiom { ty: Tm },
    Other,
}

#[derive(Debug, Clone)]
pub struct NotationDef {
    pub params: Vec<String>,
    pub body: Tm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tac {
    Intros(Vec<String>),
    Intro(Option<String>),
    Induction(String),
    Destruct(String),
    Simpl,
    Unfold(Vec<String>),
    Rewrite(Vec<(bool, Expr)>),
    Reflexivity,
    Assumption,
    Exact(Expr),
    Apply(Expr),
    Split,
    Left,
    Right,
    Constructor,
    Trivial,
    Auto,
    Admit,
    Idtac,
    Fail,
    Seq(Box<Tac>, Box<Tac>),
    Try(Box<Tac>),
    Repeat(Box<Tac>),
    Call(String),
}

#[derive(Debug, Clone)]
pub enum Segment {
    Module(String),
    Section(String),
}

#[derive(Debug, Clone)]
pub struct Env {
    pub globals: HashMap<String, Global>,
    pub syntax: Syntax,
    pub notations: HashMap<String, NotationDef>,
    pub printing: HashMap<String, PrintInfix>,
    pub ltac: HashMap<String, Tac>,
    pub segments: Vec<Segment>,
    pub modules_defined: BTreeSet<String>,
    pub opened: Vec<String>,
    pub loaded: BTreeSet<String>,
    pub nested_proofs: bool,
}

impl PrintEnv for Env {
    fn infix_for(&self, head: &str) -> Option<&PrintInfix> {
        self.printing.get(head)
    }
}

pub type KResult<T> = Result<T, String>;

fn not_found(name: &str) -> String {
    format!("The reference {name} was not found in the current environment.")
}

impl Default for Env {
    fn default() -> Self {
        Self::new()
    }
}

impl Env {
    pub fn new() -> Self {
        let mut env = Env {
            globals: HashMap::new(),
            syntax: Syntax::with_builtins(),
            notations: HashMap::new(),
            printing: HashMap::new(),
            ltac: HashMap::new(),
            segments: vec![],
            modules_defined: BTreeSet::new(),
            opened: vec![],
            loaded: BTreeSet::new(),
            nested_proofs: false,
        };
        let prop_ind = |env: &mut Env, name: &str, params: &[&str], ctors: Vec<(&str, Vec<Tm>)>| {
            let params: Vec<String> = params.iter().map(|s| s.to_string()).collect();
            env.globals.insert(
                name.into(),
                Global::Inductive {
                    params: params.clone(),
                    ctors: ctors.iter().map(|c| c.0.to_string()).collect(),
                    prop: true,
                },
            );
            for (c, args) in ctors {
                env.globals.insert(
                    c.into(),
                    Global::Ctor {
                        ind: name.into(),
                        params: params.clone(),
                        args: args.into_iter().map(|t| (None, t)).collect(),
                    },
                );
            }
        };
        prop_ind(&mut env, "True", &[], vec![("I", vec![])]);
        prop_ind(&mut env, "False", &[], vec![]);
        prop_ind(&mut env, "and", &["A", "B"], vec![("conj", vec![Tm::var("A"), Tm::var("B")])]);
        prop_ind(&mut env, "or", &["A", "B"], vec![("or_introl", vec![Tm::var("A")]), ("or_intror", vec![Tm::var("B")])]);
        prop_ind(&mut env, "eq", &["A", "x"], vec![("eq_refl", vec![])]);
        for (op, head) in [("=", "eq"), ("/\\", "and"), ("\\/", "or")] {
            let (level, assoc) = match op {
                "=" => (70, Assoc::None),
                "/\\" => (80, Assoc::Right),
                _ => (85, Assoc::Right),
            };
            env.notations.insert(
                format!("_ {op} _"),
                NotationDef {
                    params: vec!["x".into(), "y".into()],
                    body: Tm::app(Tm::var(head), vec![Tm::var("x"), Tm::var("y")]),
                },
            );
            env.printing.insert(head.into(), PrintInfix { op: op.into(), level, assoc });
        }
        env
    }

    /// Merge a loaded library's definitions.
    pub fn absorb(&mut self, lib: &Env) {
        for (k, g) in &lib.globals {
            self.globals.insert(k.clone(), g.clone());
        }
        for (k, n) in &lib.notations {
            self.notations.insert(k.clone(), n.clone());
        }
        for (k, p) in &lib.printing {
            self.printing.insert(k.clone(), p.clone());
        }
        for (k, i) in &lib.syntax.infix {
            self.syntax.infix.insert(k.clone(), i.clone());
        }
        self.syntax.symbols.extend(lib.syntax.symbols.iter().cloned());
        for (k, t) in &lib.ltac {
            self.ltac.insert(k.clone(), t.clone());
        }
        self.modules_defined.extend(lib.modules_defined.iter().cloned());
        self.loaded.extend(lib.loaded.iter().cloned());
    }

    pub fn module_path(&self) -> Vec<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Module(m) => Some(m.as_str()),
                Segment::Section(_) => None,
            })
            .collect()
    }

    pub fn qualify(&self, name: &str) -> String {
        let mut p = self.module_path().join(".");
        if p.is_empty() {
            return name.to_string();
        }
        p.push('.');
        p.push_str(name);
        p
    }

    pub fn resolve(&self, name: &str) -> Option<String> {
        let path = self.module_path();
        for i in (0..=path.len()).rev() {
            let cand = if i == 0 { name.to_string() } else { format!("{}.{}", path[..i].join("."), name) };
            if self.globals.contains_key(&cand) {
                return Some(cand);
            }
        }
        for m in self.opened.iter().rev() {
            let cand = format!("{m}.{name}");
            if self.globals.contains_key(&cand) {
                return Some(cand);
            }
        }
        // Library qualifiers such as `List.app_nil_r`.
        let mut rest = name;
        while let Some((_, tail)) = rest.split_once('.') {
            if self.globals.contains_key(tail) {
                return Some(tail.to_string());
            }
            rest = tail;
        }
        None
    }

    pub fn is_ctor(&self, key: &str) -> bool {
        matches!(self.globals.get(key), Some(Global::Ctor { .. }))
    }

    pub fn show(&self, t: &Tm) -> String {
        print(t, self)
    }

    // -----------------------------------------------------------------------
    // Elaboration

    pub fn elab(&self, e: &Expr, bound: &[String]) -> KResult<Tm> {
        let mut b = bound.to_vec();
        self.elab_in(e, &mut b)
    }

    fn elab_in(&self, e: &Expr, bound: &mut Vec<String>) -> KResult<Tm> {
        Ok(match e {
            Expr::Ref(q) => {
                if bound.iter().any(|b| b == q) {
                    Tm::Var(q.clone())
                } else {
                    Tm::Var(self.resolve(q).ok_or_else(|| not_found(q))?)
                }
            }
            Expr::App(f, args) => {
                let f = self.elab_in(f, bound)?;
                let args = args.iter().map(|a| self.elab_in(a, bound)).collect::<KResult<Vec<_>>>()?;
                Tm::app(f, args)
            }
            Expr::Notation { key, args } => {
                let def = self
                    .notations
                    .get(key)
                    .ok_or_else(|| format!("Unknown interpretation for notation \"{key}\"."))?;
                let mut map = HashMap::new();
                for (p, a) in def.params.iter().zip(args) {
                    map.insert(p.clone(), self.elab_in(a, bound)?);
                }
                def.body.subst(&map)
            }
            Expr::Prod(bs, body) => self.elab_binders(bs, body, bound, true)?,
            Expr::Lam(bs, body) => self.elab_binders(bs, body, bound, false)?,
            Expr::Arrow(a, b) => Tm::Prod {
                name: None,
                ty: Box::new(self.elab_in(a, bound)?),
                body: Box::new(self.elab_in(b, bound)?),
            },
            Expr::Match(s, branches) => {
                let s = self.elab_in(s, bound)?;
                let mut out = Vec::new();
                for (p, r) in branches {
                    let pat = self.elab_pat(p)?;
                    let n = bound.len();
                    bound.extend(pat_vars(&pat).into_iter().map(String::from));
                    let r = self.elab_in(r, bound);
                    bound.truncate(n);
                    out.push((pat, r?));
                }
                Tm::Match(Box::new(s), out)
            }
            Expr::Hole => Tm::Hole,
            Expr::Sort(s) => Tm::Sort(s.clone()),
        })
    }

    fn elab_binders(&self, bs: &[Binder], body: &Expr, bound: &mut Vec<String>, prod: bool) -> KResult<Tm> {
        let n = bound.len();
        let mut layers = Vec::new();
        let res = (|| {
            for b in bs {
                let ty = match &b.ty {
                    Some(t) => self.elab_in(t, bound)?,
                    None => Tm::Hole,
                };
                for name in &b.names {
                    layers.push((name.clone(), ty.clone()));
                    bound.push(name.clone());
                }
            }
            self.elab_in(body, bound)
        })();
        bound.truncate(n);
        let mut t = res?;
        for (name, ty) in layers.into_iter().rev() {
            t = if prod {
                Tm::Prod { name: Some(name), ty: Box::new(ty), body: Box::new(t) }
            } else {
                Tm::Lam { name, ty: Box::new(ty), body: Box::new(t) }
            };
        }
        Ok(t)
    }

    pub fn elab_pat(&self, e: &Expr) -> KResult<Pat> {
        let var_name = |a: &Expr| -> KResult<String> {
            match a {
                Expr::Ref(x) if !x.contains('.') => Ok(x.clone()),
                Expr::Hole => Ok("_".into()),
                _ => Err("Nested patterns are not supported.".into()),
            }
        };
        match e {
            Expr::Hole => Ok(Pat::Wild),
            Expr::Ref(x) => match self.resolve(x) {
                Some(k) if self.is_ctor(&k) => Ok(Pat::Ctor(k, vec![])),
                _ => Ok(Pat::Var(x.clone())),
            },
            Expr::App(f, args) => {
                let Expr::Ref(c) = f.as_ref() else { return Err("Invalid pattern.".into()) };
                let k = self.resolve(c).filter(|k| self.is_ctor(k)).ok_or_else(|| not_found(c))?;
                Ok(Pat::Ctor(k, args.iter().map(var_name).collect::<KResult<_>>()?))
            }
            Expr::Notation { key, args } => {
                let def = self
                    .notations
                    .get(key)
                    .ok_or_else(|| format!("Unknown interpretation for notation \"{key}\"."))?;
                let names: Vec<String> = args.iter().map(var_name).collect::<KResult<_>>()?;
                let (head, hargs) = def.body.spine();
                let Tm::Var(c) = head else { return Err("Invalid pattern.".into()) };
                if !self.is_ctor(c) {
                    return Err("Invalid pattern.".into());
                }
                let mut vars = Vec::new();
                for a in hargs {
                    let Tm::Var(p) = a else { return Err("Invalid pattern.".into()) };
                    let i = def.params.iter().position(|q| q == p).ok_or("Invalid pattern.")?;
                    vars.push(names[i].clone());
                }
                Ok(Pat::Ctor(c.clone(), vars))
            }
            _ => Err("Invalid pattern.".into()),
        }
    }

    // -----------------------------------------------------------------------
    // Reduction

    /// `delta` enables unfolding of plain definitions; fixpoints unfold
    /// whenever their recursive argument is a constructor.
    pub fn normalize(&self, t: &Tm, delta: bool) -> Tm {
        let mut fuel = 20_000usize;
        self.norm(t, delta, &mut fuel)
    }

    fn ctor_headed(&self, t: &Tm) -> bool {
        t.head_name().is_some_and(|h| self.is_ctor(h))
    }

    fn norm(&self, t: &Tm, delta: bool, fuel: &mut usize) -> Tm {
        if *fuel == 0 {
            return t.clone();
        }
        *fuel -= 1;
        match t {
            Tm::App(f, args) => {
                let f = self.norm(f, delta, fuel);
                let args: Vec<Tm> = args.iter().map(|a| self.norm(a, delta, fuel)).collect();
                self.reduce_app(f, args, delta, fuel)
            }
            Tm::Var(x) => match self.globals.get(x) {
                Some(Global::Def { params, body }) if delta && params.is_empty() => self.norm(body, delta, fuel),
                _ => t.clone(),
            },
            Tm::Prod { name, ty, body } => Tm::Prod {
                name: name.clone(),
                ty: Box::new(self.norm(ty, delta, fuel)),
                body: Box::new(self.norm(body, delta, fuel)),
            },
            Tm::Lam { name, ty, body } => Tm::Lam {
                name: name.clone(),
                ty: Box::new(self.norm(ty, delta, fuel)),
                body: Box::new(self.norm(body, delta, fuel)),
            },
            Tm::Match(s, bs) => {
                let s = self.norm(s, delta, fuel);
                match self.iota(&s, bs) {
                    Some(r) => self.norm(&r, delta, fuel),
                    None => Tm::Match(
                        Box::new(s),
                        bs.iter().map(|(p, r)| (p.clone(), self.norm(r, delta, fuel))).collect(),
                    ),
                }
            }
            _ => t.clone(),
        }
    }

    fn iota(&self, s: &Tm, bs: &[(Pat, Tm)]) -> Option<Tm> {
        if !self.ctor_headed(s) {
            return None;
        }
        let (h, args) = s.spine();
        let Tm::Var(c) = h else { return None };
        for (p, r) in bs {
            match p {
                Pat::Ctor(k, vs) if k == c && vs.len() == args.len() => {
                    let map = vs.iter().cloned().zip(args.iter().cloned()).collect();
                    return Some(r.subst(&map));
                }
                Pat::Var(x) => return Some(r.subst1(x, s)),
                Pat::Wild => return Some(r.clone()),
                _ => {}
            }
        }
        None
    }

    fn reduce_app(&self, f: Tm, args: Vec<Tm>, delta: bool, fuel: &mut usize) -> Tm {
        if args.is_empty() {
            return f;
        }
        match &f {
            Tm::Lam { name, body, .. } => {
                let head = body.subst1(name, &args[0]);
                let t = Tm::app(head, args[1..].to_vec());
                self.norm(&t, delta, fuel)
            }
            Tm::Var(h) => {
                let unfold = |params: &[String], body: &Tm, fuel: &mut usize| {
                    let map = params.iter().cloned().zip(args.iter().cloned()).collect();
                    let t = Tm::app(body.subst(&map), args[params.len()..].to_vec());
                    self.norm(&t, delta, fuel)
                };
                match self.globals.get(h) {
                    Some(Global::Fix { params, struct_idx: Some(k), body })
                        if args.len() >= params.len() && self.ctor_headed(&args[*k]) =>
                    {
                        unfold(params, body, fuel)
                    }
                    Some(Global::Def { params, body }) if delta && args.len() >= params.len() => {
                        unfold(params, body, fuel)
                    }
                    _ => Tm::App(Box::new(f), args),
                }
            }
            _ => Tm::App(Box::new(f), args),
        }
    }

    pub fn convertible(&self, a: &Tm, b: &Tm) -> bool {
        a.alpha_eq(b) || self.normalize(a, true).alpha_eq(&self.normalize(b, true))
    }

    /// Unfold one definition everywhere, then beta-reduce.
    pub fn unfold(&self, t: &Tm, name: &str) -> Tm {
        let Some(Global::Def { params, body }) = self.globals.get(name) else { return t.clone() };
        let mut lam = body.clone();
        for p in params.iter().rev() {
            lam = Tm::Lam { name: p.clone(), ty: Box::new(Tm::Hole), body: Box::new(lam) };
        }
        let replaced = replace_var(t, name, &lam);
        beta(&replaced)
    }
}

fn replace_var(t: &Tm, x: &str, by: &Tm) -> Tm {
    match t {
        Tm::Var(y) if y == x => by.clone(),
        Tm::App(f, args) => Tm::app(replace_var(f, x, by), args.iter().map(|a| replace_var(a, x, by)).collect()),
        Tm::Prod { name, ty, body } => Tm::Prod {
            name: name.clone(),
            ty: Box::new(replace_var(ty, x, by)),
            body: Box::new(replace_var(body, x, by)),
        },
        Tm::Lam { name, ty, body } => Tm::Lam {
            name: name.clone(),
            ty: Box::new(replace_var(ty, x, by)),
            body: Box::new(replace_var(body, x, by)),
        },
        Tm::Match(s, bs) => Tm::Match(
            Box::new(replace_var(s, x, by)),
            bs.iter().map(|(p, r)| (p.clone(), replace_var(r, x, by))).collect(),
        ),
        _ => t.clone(),
    }
}

fn beta(t: &Tm) -> Tm {
    match t {
        Tm::App(f, args) => {
            let f = beta(f);
            let args: Vec<Tm> = args.iter().map(beta).collect();
            if let Tm::Lam { name, body, .. } = &f {
                let head = body.subst1(name, &args[0]);
                return beta(&Tm::app(head, args[1..].to_vec()));
            }
            Tm::app(f, args)
        }
        Tm::Prod { name, ty, body } => Tm::Prod { name: name.clone(), ty: Box::new(beta(ty)), body: Box::new(beta(body)) },
        Tm::Lam { name, ty, body } => Tm::Lam { name: name.clone(), ty: Box::new(beta(ty)), body: Box::new(beta(body)) },
        Tm::Match(s, bs) => Tm::Match(Box::new(beta(s)), bs.iter().map(|(p, r)| (p.clone(), beta(r))).collect()),
        _ => t.clone(),
    }
}

/// First-order matching of `p` against `t`, binding variables in `metas`.
fn pmatch(p: &Tm, t: &Tm, metas: &[String], sub: &mut HashMap<String, Tm>) -> bool {
    match p {
        Tm::Var(m) if metas.contains(m) => match sub.get(m) {
            Some(bound) => bound.alpha_eq(t),
            None => {
                sub.insert(m.clone(), t.clone());
                true
            }
        },
        Tm::App(f, xs) => match t {
            Tm::App(g, ys) if xs.len() == ys.len() => {
                pmatch(f, g, metas, sub) && xs.iter().zip(ys).all(|(x, y)| pmatch(x, y, metas, sub))
            }
            _ => false,
        },
        Tm::Hole => true,
        _ => p.alpha_eq(t),
    }
}

// ---------------------------------------------------------------------------
// Goals

#[derive(Debug, Clone, PartialEq)]
pub struct Hyp {
    pub name: String,
    pub ty: Tm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalSt {
    pub hyps: Vec<Hyp>,
    pub concl: Tm,
}

impl GoalSt {
    fn names(&self) -> Vec<String> {
        self.hyps.iter().map(|h| h.name.clone()).collect()
    }

    fn hyp(&self, name: &str) -> Option<&Hyp> {
        self.hyps.iter().find(|h| h.name == name)
    }

    fn taken(&self) -> HashSet<String> {
        self.hyps.iter().map(|h| h.name.clone()).collect()
    }

    pub fn to_json(&self, env: &Env) -> Value {
        let mut hyps: Vec<(Vec<String>, String)> = Vec::new();
        for h in &self.hyps {
            let ty = env.show(&h.ty);
            match hyps.last_mut() {
                Some((names, t)) if *t == ty => names.push(h.name.clone()),
                _ => hyps.push((vec![h.name.clone()], ty)),
            }
        }
        let hyps: Vec<Value> = hyps.into_iter().map(|(names, ty)| json!({"names": names, "ty": ty})).collect();
        json!({"hyps": hyps, "ty": env.show(&self.concl)})
    }
}

pub fn fresh(base: &str, taken: &HashSet<String>) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    let stem = base.trim_end_matches(|c: char| c.is_ascii_digit());
    let digits = &base[stem.len()..];
    let mut n: u64 = if digits.is_empty() { 0 } else { digits.parse::<u64>().map_or(0, |d| d + 1) };
    loop {
        let cand = format!("{stem}{n}");
        if !taken.contains(&cand) {
            return cand;
        }
        n += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameKind {
    Bullet(String),
    Brace,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub kind: FrameKind,
    pub rest: Vec<GoalSt>,
}

#[derive(Debug, Clone)]
pub struct Proof {
    pub name: String,
    pub stmt: Tm,
    pub implicits: Vec<String>,
    pub goals: Vec<GoalSt>,
    pub stack: Vec<Frame>,
    pub given_up: Vec<GoalSt>,
}

impl Proof {
    pub fn new(name: String, stmt: Tm, implicits: Vec<String>) -> Self {
        let goals = vec![GoalSt { hyps: vec![], concl: stmt.clone() }];
        Self { name, stmt, implicits, goals, stack: vec![], given_up: vec![] }
    }

    pub fn complete(&self) -> bool {
        self.goals.is_empty() && self.stack.iter().all(|f| f.rest.is_empty())
    }

    pub fn to_json(&self, env: &Env) -> Value {
        let goals: Vec<Value> = self.goals.iter().map(|g| g.to_json(env)).collect();
        let stack: Vec<Value> = self
            .stack
            .iter()
            .rev()
            .map(|f| json!([[], f.rest.iter().map(|g| g.to_json(env)).collect::<Vec<_>>()]))
            .collect();
        let given_up: Vec<Value> = self.given_up.iter().map(|g| g.to_json(env)).collect();
        json!({"goals": goals, "stack": stack, "shelf": [], "given_up": given_up})
    }

    fn no_focus_error(&self) -> String {
        match self.stack.last() {
            Some(Frame { kind: FrameKind::Bullet(b), rest }) if !rest.is_empty() => {
                format!("No such goal. Focus next goal with bullet {b}.")
            }
            Some(Frame { kind: FrameKind::Brace, .. }) => "No such goal. Try unfocusing with \"}\".".into(),
            _ => "No such goal.".into(),
        }
    }

    pub fn bullet(&mut self, b: &str) -> KResult<()> {
        loop {
            match self.stack.last() {
                Some(Frame { kind: FrameKind::Bullet(top), .. }) if top == b => {
                    if !self.goals.is_empty() {
                        return Err(format!("Wrong bullet {b}: Current bullet {b} is not finished."));
                    }
                    let frame = self.stack.pop().unwrap();
                    let mut rest = frame.rest;
                    if rest.is_empty() {
                        self.stack.push(Frame { kind: FrameKind::Bullet(b.into()), rest: vec![] });
                        return Err(format!("Wrong bullet {b}: No more goals."));
                    }
                    let first = rest.remove(0);
                    self.goals = vec![first];
                    self.stack.push(Frame { kind: FrameKind::Bullet(b.into()), rest });
                    return Ok(());
                }
                Some(Frame { kind: FrameKind::Bullet(top), rest }) if self.goals.is_empty() => {
                    if rest.is_empty() && self.stack.iter().any(|f| f.kind == FrameKind::Bullet(b.into())) {
                        self.stack.pop();
                        continue;
                    }
                    return Err(format!("Wrong bullet {b}: Current bullet {top} is not finished."));
                }
                _ => break,
            }
        }
        if self.goals.is_empty() {
            return Err(self.no_focus_error());
        }
        let rest = self.goals.split_off(1);
        self.stack.push(Frame { kind: FrameKind::Bullet(b.into()), rest });
        Ok(())
    }

    pub fn open_brace(&mut self) -> KResult<()> {
        if self.goals.is_empty() {
            return Err(self.no_focus_error());
        }
        let rest = self.goals.split_off(1);
        self.stack.push(Frame { kind: FrameKind::Brace, rest });
        Ok(())
    }

    pub fn close_brace(&mut self) -> KResult<()> {
        if !self.goals.is_empty() {
            return Err("The proof is not complete: the current subgoal is not solved.".into());
        }
        loop {
            match self.stack.pop() {
                Some(Frame { kind: FrameKind::Brace, rest }) => {
                    self.goals = rest;
                    return Ok(());
                }
                Some(Frame { kind: FrameKind::Bullet(b), rest }) if rest.is_empty() => {
                    let _ = b;
                }
                Some(f) => {
                    self.stack.push(f);
                    return Err("This proof is focused, but cannot be unfocused this way.".into());
                }
                None => return Err("No such goal to unfocus.".into()),
            }
        }
    }

    /// Run a tactic on the first focused goal.
    pub fn run(&mut self, env: &Env, tac: &Tac) -> KResult<()> {
        if self.goals.is_empty() {
            return Err(self.no_focus_error());
        }
        let rest = self.goals.split_off(1);
        let g = self.goals.pop().unwrap();
        let mut given_up = Vec::new();
        match (Tactics { env, depth: 0 }).run(tac, g.clone(), &mut given_up) {
            Ok(mut new) => {
                new.extend(rest);
                self.goals = new;
                self.given_up.extend(given_up);
                Ok(())
            }
            Err(e) => {
                self.goals = std::iter::once(g).chain(rest).collect();
                Err(e)
            }
        }
    }
}

struct Tactics<'a> {
    env: &'a Env,
    depth: usize,
}

/// A lemma or hypothesis type, split into its universally bound variables,
/// non-dependent premises and conclusion.
fn strip(ty: &Tm, mut metas: Vec<String>) -> (Vec<String>, Vec<Tm>, Tm) {
    let mut premises = Vec::new();
    let mut cur = ty.clone();
    while let Tm::Prod { name, ty, body } = cur {
        match name {
            Some(n) if body.occurs(&n) => metas.push(n),
            _ => premises.push(*ty),
        }
        cur = *body;
    }
    (metas, premises, cur)
}

impl Tactics<'_> {
    fn show(&self, t: &Tm) -> String {
        self.env.show(t)
    }

    /// The type of an applied hypothesis or global, with implicit binders
    /// still pending as metavariables.
    fn type_of(&self, t: &Tm, g: &GoalSt) -> KResult<(Vec<String>, Tm)> {
        let (head, args) = t.spine();
        let Tm::Var(h) = head else { return Err(format!("Cannot infer the type of \"{}\".", self.show(t))) };
        let (mut ty, implicits) = if let Some(hyp) = g.hyp(h) {
            (hyp.ty.clone(), vec![])
        } else {
            match self.env.globals.get(h) {
                Some(Global::Theorem { stmt, implicits }) => (stmt.clone(), implicits.clone()),
                Some(Global::Axiom { ty }) => (ty.clone(), vec![]),
                Some(Global::Ctor { ind, params, args: cargs }) => {
                    let mut ty = Tm::app(Tm::var(ind), params.iter().map(|p| Tm::var(p)).collect());
                    for (n, aty) in cargs.iter().rev() {
                        ty = Tm::Prod { name: n.clone(), ty: Box::new(aty.clone()), body: Box::new(ty) };
                    }
                    for p in params.iter().rev() {
                        ty = Tm::Prod { name: Some(p.clone()), ty: Box::new(Tm::Hole), body: Box::new(ty) };
                    }
                    (ty, params.clone())
                }
                Some(_) => return Err(format!("\"{}\" is not a proof.", self.show(head))),
                None => return Err(not_found(h)),
            }
        };
        let mut pending = Vec::new();
        let mut args = args.iter();
        let mut next = args.next();
        while let Some(a) = next {
            let Tm::Prod { name, ty: _, body } = ty else {
                return Err(format!("Illegal application: \"{}\" has too many arguments.", self.show(t)));
            };
            match name {
                Some(n) if implicits.contains(&n) => {
                    pending.push(n);
                    ty = *body;
                    continue;
                }
                Some(n) => ty = body.subst1(&n, a),
                None => ty = *body,
            }
            next = args.next();
        }
        Ok((pending, ty))
    }

    fn run(&self, tac: &Tac, g: GoalSt, given_up: &mut Vec<GoalSt>) -> KResult<Vec<GoalSt>> {
        match tac {
            Tac::Idtac => Ok(vec![g]),
            Tac::Fail => Err("Tactic failure.".into()),
            Tac::Intros(names) if names.is_empty() => {
                let mut g = g;
                while matches!(g.concl, Tm::Prod { .. }) {
                    g = self.intro(g, None)?;
                }
                Ok(vec![g])
            }
            Tac::Intros(names) => {
                let mut g = g;
                for n in names {
                    g = self.intro(g, Some(n))?;
                }
                Ok(vec![g])
            }
            Tac::Intro(n) => Ok(vec![self.intro(g, n.as_deref())?]),
            Tac::Induction(x) => self.elim(g, x, true),
            Tac::Destruct(x) => self.elim(g, x, false),
            Tac::Simpl => {
                let concl = self.env.normalize(&g.concl, false);
                Ok(vec![GoalSt { concl, ..g }])
            }
            Tac::Unfold(names) => {
                let mut concl = g.concl.clone();
                for n in names {
                    let key = self.env.resolve(n).ok_or_else(|| not_found(n))?;
                    match self.env.globals.get(&key) {
                        Some(Global::Def { .. }) => concl = self.env.unfold(&concl, &key),
                        _ => return Err(format!("Cannot coerce {n} to an evaluable reference.")),
                    }
                }
                Ok(vec![GoalSt { concl, ..g }])
            }
            Tac::Rewrite(items) => {
                let mut goals = vec![g];
                for (rtl, e) in items {
                    let first = goals.remove(0);
                    let mut new = self.rewrite(first, *rtl, e)?;
                    new.extend(goals);
                    goals = new;
                }
                Ok(goals)
            }
            Tac::Reflexivity => {
                let (h, args) = g.concl.spine();
                if !matches!(h, Tm::Var(e) if e == "eq") || args.len() != 2 {
                    return Err("The reflexivity tactic applies only to an equality.".into());
                }
                if self.env.convertible(&args[0], &args[1]) {
                    Ok(vec![])
                } else {
                    Err(format!(
                        "Unable to unify \"{}\" with \"{}\".",
                        self.show(&args[1]),
                        self.show(&args[0])
                    ))
                }
            }
            Tac::Assumption => {
                if g.hyps.iter().any(|h| self.env.convertible(&h.ty, &g.concl)) {
                    Ok(vec![])
                } else {
                    Err("No such assumption.".into())
                }
            }
            Tac::Exact(e) => {
                let t = self.env.elab(e, &g.names())?;
                let (metas, ty) = self.type_of(&t, &g)?;
                let (metas, premises, concl) = strip(&ty, metas);
                let mut sub = HashMap::new();
                let ok = premises.is_empty()
                    && (pmatch(&concl, &g.concl, &metas, &mut sub)
                        || self.env.convertible(&concl, &g.concl) && metas.is_empty());
                if ok {
                    Ok(vec![])
                } else {
                    Err(format!(
                        "The term \"{}\" has type \"{}\" while it is expected to have type \"{}\".",
                        self.show(&t),
                        self.show(&ty),
                        self.show(&g.concl)
                    ))
                }
            }
            Tac::Apply(e) => self.apply(g, e),
            Tac::Split => self.constructor_goals(g, Some("and")),
            Tac::Left | Tac::Right => {
                let (h, args) = g.concl.spine();
                if !matches!(h, Tm::Var(o) if o == "or") || args.len() != 2 {
                    return Err("Not an inductive goal with 2 constructors.".into());
                }
                let side = if *tac == Tac::Left { &args[0] } else { &args[1] };
                Ok(vec![GoalSt { hyps: g.hyps.clone(), concl: side.clone() }])
            }
            Tac::Constructor => self.constructor_goals(g, None),
            Tac::Trivial | Tac::Auto => {
                for t in [Tac::Reflexivity, Tac::Assumption, Tac::Constructor] {
                    if let Ok(r) = self.run(&t, g.clone(), given_up) {
                        if r.is_empty() {
                            return Ok(r);
                        }
                    }
                }
                if *tac == Tac::Auto {
                    if let Ok(r) = self.run(&Tac::Intros(vec![]), g.clone(), given_up) {
                        if r[0] != g {
                            return self.run(tac, r[0].clone(), given_up).or(Ok(vec![g]));
                        }
                    }
                }
                Ok(vec![g])
            }
            Tac::Admit => {
                given_up.push(g);
                Ok(vec![])
            }
            Tac::Seq(a, b) => {
                let mut out = Vec::new();
                for g2 in self.run(a, g, given_up)? {
                    out.extend(self.run(b, g2, given_up)?);
                }
                Ok(out)
            }
            Tac::Try(t) => {
                let mut local = Vec::new();
                match self.run(t, g.clone(), &mut local) {
                    Ok(r) => {
                        given_up.extend(local);
                        Ok(r)
                    }
                    Err(_) => Ok(vec![g]),
                }
            }
            Tac::Repeat(t) => {
                let mut goals = vec![g];
                for _ in 0..64 {
                    let mut progressed = false;
                    let mut next = Vec::new();
                    for g2 in goals {
                        let mut local = Vec::new();
                        match self.run(t, g2.clone(), &mut local) {
                            Ok(r) if r != [g2.clone()] => {
                                progressed = true;
                                given_up.extend(local);
                                next.extend(r);
                            }
                            _ => next.push(g2),
                        }
                    }
                    goals = next;
                    if !progressed {
                        break;
                    }
                }
                Ok(goals)
            }
            Tac::Call(name) => {
                let body = self.env.ltac.get(name).ok_or_else(|| not_found(name))?;
                if self.depth > 32 {
                    return Err(format!("Tactic {name} loops."));
                }
                Tactics { env: self.env, depth: self.depth + 1 }.run(body, g, given_up)
            }
        }
    }

    fn intro(&self, g: GoalSt, name: Option<&str>) -> KResult<GoalSt> {
        let Tm::Prod { name: bname, ty, body } = &g.concl else {
            return Err("No product even after head-reduction.".into());
        };
        let taken = g.taken();
        let chosen = match name {
            Some(n) => {
                if taken.contains(n) {
                    return Err(format!("{n} is already used."));
                }
                n.to_string()
            }
            None => fresh(bname.as_deref().unwrap_or("H"), &taken),
        };
        let body = match bname {
            Some(b) if b != &chosen => body.subst1(b, &Tm::Var(chosen.clone())),
            _ => (**body).clone(),
        };
        let ty = if matches!(**ty, Tm::Hole) { Tm::Sort("Type".into()) } else { (**ty).clone() };
        let mut hyps = g.hyps.clone();
        hyps.push(Hyp { name: chosen, ty });
        Ok(GoalSt { hyps, concl: body })
    }

    fn base_name(&self, ty: &Tm) -> String {
        match ty.head_name() {
            Some(h) => {
                if let Some(Global::Inductive { prop: true, .. }) = self.env.globals.get(h) {
                    return "H".into();
                }
                let last = h.rsplit('.').next().unwrap_or(h);
                last.chars().next().map(|c| c.to_lowercase().to_string()).unwrap_or_else(|| "x".into())
            }
            None => match ty {
                Tm::Sort(_) => "T".into(),
                Tm::Prod { .. } => "f".into(),
                _ => "x".into(),
            },
        }
    }

    fn elim(&self, mut g: GoalSt, x: &str, induction: bool) -> KResult<Vec<GoalSt>> {
        if g.hyp(x).is_none() {
            // Introduce binders up to the named one, as Coq does.
            let mut probe = g.clone();
            loop {
                match &probe.concl {
                    Tm::Prod { name: Some(n), .. } => {
                        let stop = n == x;
                        probe = self.intro(probe, None)?;
                        if stop {
                            break;
                        }
                    }
                    Tm::Prod { name: None, .. } => probe = self.intro(probe, None)?,
                    _ => return Err(format!("The variable {x} was not found in the current environment.")),
                }
            }
            g = probe;
        }
        let pos = g.hyps.iter().position(|h| h.name == x).unwrap();
        let xty = g.hyps[pos].ty.clone();
        let ind = xty.head_name().map(str::to_string).unwrap_or_default();
        let Some(Global::Inductive { params, ctors, .. }) = self.env.globals.get(&ind) else {
            return Err("Not an inductive product.".into());
        };
        let (_, pargs) = xty.spine();
        let psub: HashMap<String, Tm> = params.iter().cloned().zip(pargs.iter().cloned()).collect();
        let mut out = Vec::new();
        for c in ctors {
            let Some(Global::Ctor { args, .. }) = self.env.globals.get(c) else { continue };
            let mut taken: HashSet<String> =
                g.hyps.iter().filter(|h| h.name != x).map(|h| h.name.clone()).collect();
            let mut new_hyps = Vec::new();
            let mut ihs = Vec::new();
            let mut vals = Vec::new();
            let mut local = HashMap::new();
            for (aname, aty) in args {
                let aty = aty.subst(&psub).subst(&local);
                let recursive = aty.head_name() == Some(ind.as_str());
                let base = match aname {
                    Some(n) => n.clone(),
                    None if recursive => x.to_string(),
                    None => self.base_name(&aty),
                };
                let n = fresh(&base, &taken);
                taken.insert(n.clone());
                if let Some(an) = aname {
                    local.insert(an.clone(), Tm::Var(n.clone()));
                }
                new_hyps.push(Hyp { name: n.clone(), ty: aty });
                vals.push(Tm::Var(n.clone()));
                if recursive && induction {
                    ihs.push(n);
                }
            }
            let value = Tm::app(Tm::var(c), vals);
            let concl = g.concl.subst1(x, &value);
            let mut hyps: Vec<Hyp> = Vec::new();
            for (i, h) in g.hyps.iter().enumerate() {
                if i == pos {
                    hyps.extend(new_hyps.iter().cloned());
                } else {
                    hyps.push(Hyp { name: h.name.clone(), ty: h.ty.subst1(x, &value) });
                }
            }
            for r in ihs {
                let n = fresh(&format!("IH{r}"), &taken);
                taken.insert(n.clone());
                hyps.push(Hyp { name: n, ty: g.concl.subst1(x, &Tm::Var(r)) });
            }
            out.push(GoalSt { hyps, concl });
        }
        Ok(out)
    }

    fn rewrite(&self, g: GoalSt, rtl: bool, e: &Expr) -> KResult<Vec<GoalSt>> {
        let t = self.env.elab(e, &g.names())?;
        let (metas, ty) = self.type_of(&t, &g)?;
        let (metas, premises, concl) = strip(&ty, metas);
        let (h, args) = concl.spine();
        if !matches!(h, Tm::Var(q) if q == "eq") || args.len() != 2 {
            return Err("The term provided does not end with an equation.".into());
        }
        let (from, to) = if rtl { (&args[1], &args[0]) } else { (&args[0], &args[1]) };
        let mut subterms = Vec::new();
        g.concl.preorder(&mut subterms);
        for s in subterms {
            let mut sub = HashMap::new();
            if !pmatch(from, s, &metas, &mut sub) {
                continue;
            }
            let needed = |m: &String| to.occurs(m) || premises.iter().any(|p| p.occurs(m));
            if let Some(m) = metas.iter().find(|m| !sub.contains_key(*m) && needed(m)) {
                return Err(format!("Unable to find an instance for the variable {m}."));
            }
            let from_i = from.subst(&sub);
            let to_i = to.subst(&sub);
            let mut goals = vec![GoalSt { hyps: g.hyps.clone(), concl: g.concl.replace(&from_i, &to_i) }];
            goals.extend(premises.iter().map(|p| GoalSt { hyps: g.hyps.clone(), concl: p.subst(&sub) }));
            return Ok(goals);
        }
        let shown: HashMap<String, Tm> = metas.iter().map(|m| (m.clone(), Tm::Var(format!("?{m}")))).collect();
        Err(format!("Found no subterm matching \"{}\" in the current goal.", self.show(&from.subst(&shown))))
    }

    fn apply(&self, g: GoalSt, e: &Expr) -> KResult<Vec<GoalSt>> {
        let t = self.env.elab(e, &g.names())?;
        let (metas, ty) = self.type_of(&t, &g)?;
        let (metas, premises, concl) = strip(&ty, metas);
        let mut sub = HashMap::new();
        if !pmatch(&concl, &g.concl, &metas, &mut sub) {
            sub.clear();
            let (nc, ng) = (self.env.normalize(&concl, true), self.env.normalize(&g.concl, true));
            if !pmatch(&nc, &ng, &metas, &mut sub) {
                return Err(format!(
                    "Unable to unify \"{}\" with \"{}\".",
                    self.show(&concl),
                    self.show(&g.concl)
                ));
            }
        }
        let mut goals = Vec::new();
        for p in &premises {
            if let Some(m) = metas.iter().find(|m| !sub.contains_key(*m) && p.occurs(m)) {
                return Err(format!("Unable to find an instance for the variable {m}."));
            }
            goals.push(GoalSt { hyps: g.hyps.clone(), concl: p.subst(&sub) });
        }
        Ok(goals)
    }

    fn constructor_goals(&self, g: GoalSt, only: Option<&str>) -> KResult<Vec<GoalSt>> {
        let (h, args) = g.concl.spine();
        let head = h.head_name().unwrap_or_default().to_string();
        if only.is_some_and(|o| o != head) {
            return Err("Not an inductive goal with 1 constructor.".into());
        }
        match head.as_str() {
            "True" => Ok(vec![]),
            "and" if args.len() == 2 => Ok(vec![
                GoalSt { hyps: g.hyps.clone(), concl: args[0].clone() },
                GoalSt { hyps: g.hyps.clone(), concl: args[1].clone() },
            ]),
            "eq" if args.len() == 2 && self.env.convertible(&args[0], &args[1]) => Ok(vec![]),
            _ => Err("Unable to apply a constructor to the goal.".into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_names_follow_coq() {
        let taken: HashSet<String> = ["a", "H", "l1", "H0"].iter().map(|s| s.to_string()).collect();
        assert_eq!(fresh("a", &taken), "a0");
        assert_eq!(fresh("H", &taken), "H1");
        assert_eq!(fresh("l1", &taken), "l2");
        assert_eq!(fresh("x", &taken), "x");
    }
}
