//! Surface syntax of terms, their coq-lsp style JSON, and the untyped core
//! terms the toy kernel computes with.

use std::collections::{BTreeSet, HashMap};

use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Num(String),
    Sym(String),
}

impl Tok {
    pub fn is_sym(&self, s: &str) -> bool {
        matches!(self, Tok::Sym(x) if x == s)
    }

    pub fn is_kw(&self, s: &str) -> bool {
        matches!(self, Tok::Ident(x) if x == s)
    }

    pub fn show(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Num(s) | Tok::Sym(s) => s.clone(),
            Tok::Str(s) => format!("\"{s}\""),
        }
    }
}

const BASE_SYMBOLS: &[&str] = &[
    "(", ")", "{", "}", "[", "]", ",", ":", ":=", "=>", "->", "<-", "|", ";", "=", "/\\", "\\/", "@", "_",
    "%", "#",
];

const KEYWORDS: &[&str] =
    &["forall", "fun", "match", "with", "end", "as", "in", "return", "let", "if", "then", "else", "struct"];

fn ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

pub fn lex(src: &str, extra: &BTreeSet<String>) -> Result<Vec<Tok>, String> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err("Syntax error: unterminated string.".into()),
                    Some((_, '"')) if chars.get(i + 1).map(|p| p.1) == Some('"') => {
                        s.push('"');
                        i += 2;
                    }
                    Some((_, '"')) => {
                        i += 1;
                        break;
                    }
                    Some((_, ch)) => {
                        s.push(*ch);
                        i += 1;
                    }
                }
            }
            toks.push(Tok::Str(s));
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some((_, d)) = chars.get(i).filter(|p| p.1.is_ascii_digit()) {
                s.push(*d);
                i += 1;
            }
            toks.push(Tok::Num(s));
            continue;
        }
        let lone_underscore = c == '_' && !chars.get(i + 1).is_some_and(|p| ident_char(p.1));
        if ident_start(c) && !lone_underscore {
            let mut s = String::new();
            loop {
                while let Some((_, d)) = chars.get(i).filter(|p| ident_char(p.1)) {
                    s.push(*d);
                    i += 1;
                }
                // `A.b` continues a qualified identifier.
                let dot = chars.get(i).map(|p| p.1) == Some('.');
                if dot && chars.get(i + 1).is_some_and(|p| ident_start(p.1)) {
                    s.push('.');
                    i += 1;
                } else {
                    break;
                }
            }
            toks.push(Tok::Ident(s));
            continue;
        }
        let rest = &src[off..];
        let best = BASE_SYMBOLS
            .iter()
            .copied()
            .chain(extra.iter().map(String::as_str))
            .filter(|s| rest.starts_with(s))
            .max_by_key(|s| s.len());
        let sym = best.map(str::to_string).unwrap_or_else(|| c.to_string());
        i += sym.chars().count();
        toks.push(Tok::Sym(sym));
    }
    Ok(toks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assoc {
    Left,
    Right,
    None,
}

#[derive(Debug, Clone)]
pub struct Infix {
    pub level: u32,
    pub assoc: Assoc,
    pub key: String,
}

/// What the parser needs to know about notations in scope.
#[derive(Debug, Clone, Default)]
pub struct Syntax {
    pub infix: HashMap<String, Infix>,
    pub symbols: BTreeSet<String>,
}

impl Syntax {
    pub fn with_builtins() -> Self {
        let mut s = Self::default();
        s.add("=", 70, Assoc::None);
        s.add("/\\", 80, Assoc::Right);
        s.add("\\/", 85, Assoc::Right);
        s
    }

    pub fn add(&mut self, op: &str, level: u32, assoc: Assoc) {
        self.symbols.insert(op.to_string());
        self.infix.insert(op.to_string(), Infix { level, assoc, key: format!("_ {op} _") });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binder {
    pub names: Vec<String>,
    pub ty: Option<Expr>,
    pub implicit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Ref(String),
    App(Box<Expr>, Vec<Expr>),
    Notation { key: String, args: Vec<Expr> },
    Prod(Vec<Binder>, Box<Expr>),
    Arrow(Box<Expr>, Box<Expr>),
    Lam(Vec<Binder>, Box<Expr>),
    Match(Box<Expr>, Vec<(Expr, Expr)>),
    Hole,
    Sort(String),
}

pub struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    syntax: &'a Syntax,
}

pub type PResult<T> = Result<T, String>;

impl<'a> Parser<'a> {
    pub fn new(toks: Vec<Tok>, syntax: &'a Syntax) -> Self {
        Self { toks, pos: 0, syntax }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    pub fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k)
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    pub fn peek_sym(&self, s: &str) -> bool {
        self.peek().is_some_and(|t| t.is_sym(s))
    }

    pub fn peek_kw(&self, s: &str) -> bool {
        self.peek().is_some_and(|t| t.is_kw(s))
    }

    pub fn eat_sym(&mut self, s: &str) -> bool {
        if self.peek_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_kw(&mut self, s: &str) -> bool {
        if self.peek_kw(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{s}' expected")))
        }
    }

    pub fn unexpected(&self, what: &str) -> String {
        match self.peek() {
            Some(t) => format!("Syntax error: {what} (found '{}').", t.show()),
            None => format!("Syntax error: {what} (found end of sentence)."),
        }
    }

    pub fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("identifier expected")),
        }
    }

    pub fn expect_end(&self) -> PResult<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.unexpected("'.' expected"))
        }
    }

    pub fn term(&mut self) -> PResult<Expr> {
        self.term_at(200)
    }

    pub fn term_at(&mut self, max: u32) -> PResult<Expr> {
        let (mut left, mut lvl) = if self.eat_kw("forall") {
            let bs = self.binders(&[","])?;
            self.expect_sym(",")?;
            (Expr::Prod(bs, Box::new(self.term_at(200)?)), 200)
        } else if self.eat_kw("fun") {
            let bs = self.binders(&["=>"])?;
            self.expect_sym("=>")?;
            (Expr::Lam(bs, Box::new(self.term_at(200)?)), 200)
        } else {
            self.application()?
        };
        loop {
            let Some(Tok::Sym(op)) = self.peek() else { break };
            if op == "->" {
                if max < 99 || lvl > 98 {
                    break;
                }
                self.pos += 1;
                let right = self.term_at(99)?;
                left = Expr::Arrow(Box::new(left), Box::new(right));
                lvl = 99;
                continue;
            }
            let Some(inf) = self.syntax.infix.get(op) else { break };
            let (l, assoc, key) = (inf.level, inf.assoc, inf.key.clone());
            let left_max = if assoc == Assoc::Left { l } else { l - 1 };
            if l > max || lvl > left_max {
                break;
            }
            self.pos += 1;
            let right = self.term_at(if assoc == Assoc::Right { l } else { l - 1 })?;
            left = Expr::Notation { key, args: vec![left, right] };
            lvl = l;
        }
        Ok(left)
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Some(Tok::Ident(s)) => !KEYWORDS.contains(&s.as_str()) || s == "match",
            Some(Tok::Sym(s)) => s == "(" || s == "_" || s == "@",
            _ => false,
        }
    }

    fn application(&mut self) -> PResult<(Expr, u32)> {
        let head = self.atom()?;
        let mut args = Vec::new();
        while self.starts_atom() {
            args.push(self.atom()?);
        }
        if args.is_empty() {
            Ok((head, 0))
        } else {
            Ok((Expr::App(Box::new(head), args), 10))
        }
    }

    fn atom(&mut self) -> PResult<Expr> {
        if self.eat_sym("(") {
            let e = self.term_at(200)?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        if self.eat_sym("_") {
            return Ok(Expr::Hole);
        }
        if self.eat_sym("@") {
            return Ok(Expr::Ref(self.ident()?));
        }
        if self.eat_kw("match") {
            let scrut = self.term_at(200)?;
            if !self.eat_kw("with") {
                return Err(self.unexpected("'with' expected"));
            }
            self.eat_sym("|");
            let mut branches = Vec::new();
            if !self.peek_kw("end") {
                loop {
                    let pat = self.term_at(200)?;
                    self.expect_sym("=>")?;
                    let rhs = self.term_at(200)?;
                    branches.push((pat, rhs));
                    if !self.eat_sym("|") {
                        break;
                    }
                }
            }
            if !self.eat_kw("end") {
                return Err(self.unexpected("'end' expected"));
            }
            return Ok(Expr::Match(Box::new(scrut), branches));
        }
        let id = self.ident()?;
        Ok(match id.as_str() {
            "Type" | "Prop" | "Set" => Expr::Sort(id),
            _ => Expr::Ref(id),
        })
    }

    /// Binders up to (not including) one of `stop`.
    pub fn binders(&mut self, stop: &[&str]) -> PResult<Vec<Binder>> {
        let mut out = Vec::new();
        loop {
            if self.peek().is_none() || stop.iter().any(|s| self.peek_sym(s)) {
                break;
            }
            if self.peek_sym("(") || self.peek_sym("{") {
                if self.peek_sym("{") && self.peek_at(1).is_some_and(|t| t.is_kw("struct")) {
                    break;
                }
                let implicit = self.eat_sym("{");
                if !implicit {
                    self.expect_sym("(")?;
                }
                let mut names = vec![self.ident()?];
                while let Some(Tok::Ident(_)) = self.peek() {
                    names.push(self.ident()?);
                }
                let ty = if self.eat_sym(":") { Some(self.term_at(200)?) } else { None };
                self.expect_sym(if implicit { "}" } else { ")" })?;
                out.push(Binder { names, ty, implicit });
            } else if let Some(Tok::Ident(s)) = self.peek() {
                if KEYWORDS.contains(&s.as_str()) {
                    break;
                }
                let mut names = vec![self.ident()?];
                while let Some(Tok::Ident(s)) = self.peek() {
                    if KEYWORDS.contains(&s.as_str()) {
                        break;
                    }
                    names.push(self.ident()?);
                }
                // A bare `x y : T` group runs to the terminator.
                let ty = if self.peek_sym(":") && stop.contains(&",") || self.peek_sym(":") && stop.contains(&"=>") {
                    self.pos += 1;
                    Some(self.term_at(200)?)
                } else {
                    None
                };
                out.push(Binder { names, ty, implicit: false });
            } else {
                return Err(self.unexpected("binder expected"));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
pub fn parse_term(src: &str, syntax: &Syntax) -> PResult<Expr> {
    let toks = lex(src, &syntax.symbols)?;
    let mut p = Parser::new(toks, syntax);
    let e = p.term()?;
    p.expect_end()?;
    Ok(e)
}

// ---------------------------------------------------------------------------
// AST emission

pub fn id_json(s: &str) -> Value {
    json!(["Id", s])
}

pub fn name_json(s: &str) -> Value {
    json!({"v": ["Name", id_json(s)], "loc": null})
}

pub fn qualid_json(q: &str) -> Value {
    let mut parts: Vec<&str> = q.split('.').collect();
    let last = parts.pop().unwrap_or_default();
    let dir: Vec<Value> = parts.iter().rev().map(|p| id_json(p)).collect();
    json!(["Ser_Qualid", ["DirPath", dir], id_json(last)])
}

fn v(node: Value) -> Value {
    json!({"v": node, "loc": null})
}

fn binder_json(b: &Binder) -> Value {
    let names: Vec<Value> = b.names.iter().map(|n| name_json(n)).collect();
    let kind = if b.implicit { "MaxImplicit" } else { "Explicit" };
    let ty = b.ty.as_ref().map(constr_json).unwrap_or_else(|| constr_json(&Expr::Hole));
    json!(["CLocalAssum", names, ["Default", [kind]], ty])
}

pub fn binders_json(bs: &[Binder]) -> Value {
    Value::Array(bs.iter().map(binder_json).collect())
}

pub fn constr_json(e: &Expr) -> Value {
    match e {
        Expr::Ref(q) => v(json!(["CRef", qualid_json(q), null])),
        Expr::App(f, args) => {
            let args: Vec<Value> = args.iter().map(|a| json!([constr_json(a), null])).collect();
            v(json!(["CApp", constr_json(f), args]))
        }
        Expr::Notation { key, args } => {
            let args: Vec<Value> = args.iter().map(constr_json).collect();
            v(json!(["CNotation", null, [["InConstrEntry"], key], [args, [], [], []]]))
        }
        Expr::Prod(bs, body) => v(json!(["CProdN", binders_json(bs), constr_json(body)])),
        Expr::Arrow(a, b) => v(json!([
            "CProdN",
            [["CLocalAssum", [{"v": ["Anonymous"], "loc": null}], ["Default", ["Explicit"]], constr_json(a)]],
            constr_json(b)
        ])),
        Expr::Lam(bs, body) => v(json!(["CLambdaN", binders_json(bs), constr_json(body)])),
        Expr::Match(scrut, branches) => {
            let bs: Vec<Value> =
                branches.iter().map(|(p, r)| v(json!([[[pattern_json(p)]], constr_json(r)]))).collect();
            v(json!(["CCases", ["RegularStyle"], null, [[constr_json(scrut), null, null]], bs]))
        }
        Expr::Hole => v(json!(["CHole", null, ["IntroAnonymous"]])),
        Expr::Sort(s) => v(json!(["CSort", [s]])),
    }
}

pub fn pattern_json(e: &Expr) -> Value {
    match e {
        Expr::Ref(q) => v(json!(["CPatAtom", qualid_json(q)])),
        Expr::Hole => v(json!(["CPatAtom", null])),
        Expr::App(f, args) => {
            let head = match f.as_ref() {
                Expr::Ref(q) => qualid_json(q),
                _ => Value::Null,
            };
            let args: Vec<Value> = args.iter().map(pattern_json).collect();
            v(json!(["CPatCstr", head, null, args]))
        }
        Expr::Notation { key, args } => {
            let args: Vec<Value> = args.iter().map(pattern_json).collect();
            v(json!(["CPatNotation", null, [["InConstrEntry"], key], [args, []], []]))
        }
        other => constr_json(other),
    }
}

// ---------------------------------------------------------------------------
// Core terms

#[derive(Debug, Clone, PartialEq)]
pub enum Pat {
    Ctor(String, Vec<String>),
    Var(String),
    Wild,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tm {
    Var(String),
    App(Box<Tm>, Vec<Tm>),
    /// `name = None` is a non-dependent arrow.
    Prod { name: Option<String>, ty: Box<Tm>, body: Box<Tm> },
    Lam { name: String, ty: Box<Tm>, body: Box<Tm> },
    Match(Box<Tm>, Vec<(Pat, Tm)>),
    Sort(String),
    Hole,
}

impl Tm {
    pub fn var(s: &str) -> Tm {
        Tm::Var(s.to_string())
    }

    pub fn app(f: Tm, args: Vec<Tm>) -> Tm {
        if args.is_empty() {
            return f;
        }
        match f {
            Tm::App(g, mut a) => {
                a.extend(args);
                Tm::App(g, a)
            }
            f => Tm::App(Box::new(f), args),
        }
    }

    /// Head constant and arguments.
    pub fn spine(&self) -> (&Tm, &[Tm]) {
        match self {
            Tm::App(f, args) => (f, args),
            t => (t, &[]),
        }
    }

    pub fn head_name(&self) -> Option<&str> {
        match self.spine().0 {
            Tm::Var(s) => Some(s),
            _ => None,
        }
    }

    pub fn occurs(&self, x: &str) -> bool {
        match self {
            Tm::Var(y) => x == y,
            Tm::App(f, args) => f.occurs(x) || args.iter().any(|a| a.occurs(x)),
            Tm::Prod { name, ty, body } => ty.occurs(x) || (name.as_deref() != Some(x) && body.occurs(x)),
            Tm::Lam { name, ty, body } => ty.occurs(x) || (name != x && body.occurs(x)),
            Tm::Match(s, bs) => s.occurs(x) || bs.iter().any(|(p, r)| !pat_binds(p, x) && r.occurs(x)),
            Tm::Sort(_) | Tm::Hole => false,
        }
    }

    pub fn subst(&self, map: &HashMap<String, Tm>) -> Tm {
        if map.is_empty() {
            return self.clone();
        }
        match self {
            Tm::Var(y) => map.get(y).cloned().unwrap_or_else(|| self.clone()),
            Tm::App(f, args) => Tm::app(f.subst(map), args.iter().map(|a| a.subst(map)).collect()),
            Tm::Prod { name, ty, body } => {
                let inner = without(map, name.iter().map(String::as_str));
                Tm::Prod { name: name.clone(), ty: Box::new(ty.subst(map)), body: Box::new(body.subst(&inner)) }
            }
            Tm::Lam { name, ty, body } => {
                let inner = without(map, std::iter::once(name.as_str()));
                Tm::Lam { name: name.clone(), ty: Box::new(ty.subst(map)), body: Box::new(body.subst(&inner)) }
            }
            Tm::Match(s, bs) => Tm::Match(
                Box::new(s.subst(map)),
                bs.iter()
                    .map(|(p, r)| {
                        let inner = without(map, pat_vars(p).into_iter());
                        (p.clone(), r.subst(&inner))
                    })
                    .collect(),
            ),
            Tm::Sort(_) | Tm::Hole => self.clone(),
        }
    }

    pub fn subst1(&self, x: &str, t: &Tm) -> Tm {
        let mut m = HashMap::new();
        m.insert(x.to_string(), t.clone());
        self.subst(&m)
    }

    /// Structural equality up to renaming of bound variables.
    pub fn alpha_eq(&self, other: &Tm) -> bool {
        alpha(self, other, &mut Vec::new())
    }

    /// Replace every subterm alpha-equal to `from` by `to`.
    pub fn replace(&self, from: &Tm, to: &Tm) -> Tm {
        if self.alpha_eq(from) {
            return to.clone();
        }
        match self {
            Tm::App(f, args) => Tm::app(f.replace(from, to), args.iter().map(|a| a.replace(from, to)).collect()),
            Tm::Prod { name, ty, body } => {
                Tm::Prod { name: name.clone(), ty: Box::new(ty.replace(from, to)), body: Box::new(body.replace(from, to)) }
            }
            Tm::Lam { name, ty, body } => {
                Tm::Lam { name: name.clone(), ty: Box::new(ty.replace(from, to)), body: Box::new(body.replace(from, to)) }
            }
            Tm::Match(s, bs) => Tm::Match(
                Box::new(s.replace(from, to)),
                bs.iter().map(|(p, r)| (p.clone(), r.replace(from, to))).collect(),
            ),
            _ => self.clone(),
        }
    }

    /// Subterms in prefix order.
    pub fn preorder<'a>(&'a self, out: &mut Vec<&'a Tm>) {
        out.push(self);
        match self {
            Tm::App(f, args) => {
                f.preorder(out);
                for a in args {
                    a.preorder(out);
                }
            }
            Tm::Prod { ty, body, .. } | Tm::Lam { ty, body, .. } => {
                ty.preorder(out);
                body.preorder(out);
            }
            Tm::Match(s, bs) => {
                s.preorder(out);
                for (_, r) in bs {
                    r.preorder(out);
                }
            }
            _ => {}
        }
    }
}

fn without<'a>(map: &HashMap<String, Tm>, names: impl Iterator<Item = &'a str>) -> HashMap<String, Tm> {
    let mut m = map.clone();
    for n in names {
        m.remove(n);
    }
    m
}

pub fn pat_vars(p: &Pat) -> Vec<&str> {
    match p {
        Pat::Ctor(_, vs) => vs.iter().map(String::as_str).collect(),
        Pat::Var(x) => vec![x.as_str()],
        Pat::Wild => vec![],
    }
}

fn pat_binds(p: &Pat, x: &str) -> bool {
    pat_vars(p).contains(&x)
}

fn alpha(a: &Tm, b: &Tm, env: &mut Vec<(String, String)>) -> bool {
    match (a, b) {
        (Tm::Var(x), Tm::Var(y)) => {
            for (l, r) in env.iter().rev() {
                if l == x || r == y {
                    return l == x && r == y;
                }
            }
            x == y
        }
        (Tm::App(f, xs), Tm::App(g, ys)) => {
            xs.len() == ys.len() && alpha(f, g, env) && xs.iter().zip(ys).all(|(x, y)| alpha(x, y, env))
        }
        (Tm::Prod { name: n1, ty: t1, body: b1 }, Tm::Prod { name: n2, ty: t2, body: b2 }) => {
            if !alpha(t1, t2, env) {
                return false;
            }
            let l = n1.clone().unwrap_or_else(|| "_".into());
            let r = n2.clone().unwrap_or_else(|| "_".into());
            env.push((l, r));
            let ok = alpha(b1, b2, env);
            env.pop();
            ok
        }
        (Tm::Lam { name: n1, ty: t1, body: b1 }, Tm::Lam { name: n2, ty: t2, body: b2 }) => {
            if !alpha(t1, t2, env) {
                return false;
            }
            env.push((n1.clone(), n2.clone()));
            let ok = alpha(b1, b2, env);
            env.pop();
            ok
        }
        (Tm::Match(s1, bs1), Tm::Match(s2, bs2)) => {
            alpha(s1, s2, env)
                && bs1.len() == bs2.len()
                && bs1.iter().zip(bs2).all(|((p1, r1), (p2, r2))| {
                    let (v1, v2) = (pat_vars(p1), pat_vars(p2));
                    let same_shape = match (p1, p2) {
                        (Pat::Ctor(c1, _), Pat::Ctor(c2, _)) => c1 == c2 && v1.len() == v2.len(),
                        (Pat::Var(_), Pat::Var(_)) | (Pat::Wild, Pat::Wild) => true,
                        _ => false,
                    };
                    if !same_shape {
                        return false;
                    }
                    let n = env.len();
                    env.extend(v1.iter().zip(&v2).map(|(x, y)| (x.to_string(), y.to_string())));
                    let ok = alpha(r1, r2, env);
                    env.truncate(n);
                    ok
                })
        }
        (Tm::Sort(x), Tm::Sort(y)) => x == y,
        (Tm::Hole, Tm::Hole) => true,
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Printing

/// Infix notation used to print applications of `head`.
#[derive(Debug, Clone)]
pub struct PrintInfix {
    pub op: String,
    pub level: u32,
    pub assoc: Assoc,
}

pub trait PrintEnv {
    fn infix_for(&self, head: &str) -> Option<&PrintInfix>;
}

pub fn print(t: &Tm, env: &dyn PrintEnv) -> String {
    let mut s = String::new();
    pr(t, env, 200, &mut s);
    s
}

fn level_of(t: &Tm, env: &dyn PrintEnv) -> u32 {
    match t {
        Tm::Var(_) | Tm::Sort(_) | Tm::Hole | Tm::Match(..) => 0,
        Tm::App(f, args) => match f.as_ref() {
            Tm::Var(h) if args.len() == 2 && env.infix_for(h).is_some() => env.infix_for(h).unwrap().level,
            _ => 10,
        },
        Tm::Prod { name, body, .. } => {
            if name.as_ref().is_some_and(|n| body.occurs(n)) {
                200
            } else {
                99
            }
        }
        Tm::Lam { .. } => 200,
    }
}

fn pr(t: &Tm, env: &dyn PrintEnv, max: u32, out: &mut String) {
    let lvl = level_of(t, env);
    let paren = lvl > max;
    if paren {
        out.push('(');
    }
    match t {
        Tm::Var(x) => out.push_str(x),
        Tm::Sort(s) => out.push_str(s),
        Tm::Hole => out.push('_'),
        Tm::App(f, args) => {
            let infix = match f.as_ref() {
                Tm::Var(h) if args.len() == 2 => env.infix_for(h),
                _ => None,
            };
            if let Some(inf) = infix {
                let l = inf.level;
                let (lm, rm) = match inf.assoc {
                    Assoc::Left => (l, l - 1),
                    Assoc::Right => (l - 1, l),
                    Assoc::None => (l - 1, l - 1),
                };
                pr(&args[0], env, lm, out);
                out.push(' ');
                out.push_str(&inf.op);
                out.push(' ');
                pr(&args[1], env, rm, out);
            } else {
                pr(f, env, 10, out);
                for a in args {
                    out.push(' ');
                    pr(a, env, 9, out);
                }
            }
        }
        Tm::Prod { name, ty, body } => {
            if lvl == 99 {
                pr(ty, env, 98, out);
                out.push_str(" -> ");
                pr(body, env, 99, out);
            } else {
                let _ = name;
                let mut groups: Vec<(Vec<String>, &Tm)> = Vec::new();
                let mut cur = t;
                while let Tm::Prod { name: Some(n), ty, body } = cur {
                    if !body.occurs(n) {
                        break;
                    }
                    match groups.last_mut() {
                        Some((names, gty)) if gty.alpha_eq(ty) && !ty.occurs(names.last().unwrap()) => {
                            names.push(n.clone())
                        }
                        _ => groups.push((vec![n.clone()], ty)),
                    }
                    cur = body;
                }
                out.push_str("forall ");
                binder_groups(&groups, env, out);
                out.push_str(", ");
                pr(cur, env, 200, out);
            }
        }
        Tm::Lam { .. } => {
            let mut groups: Vec<(Vec<String>, &Tm)> = Vec::new();
            let mut cur = t;
            while let Tm::Lam { name, ty, body } = cur {
                match groups.last_mut() {
                    Some((names, gty)) if gty.alpha_eq(ty) => names.push(name.clone()),
                    _ => groups.push((vec![name.clone()], ty)),
                }
                cur = body;
            }
            out.push_str("fun ");
            binder_groups(&groups, env, out);
            out.push_str(" => ");
            pr(cur, env, 200, out);
        }
        Tm::Match(s, bs) => {
            out.push_str("match ");
            pr(s, env, 200, out);
            out.push_str(" with");
            for (p, r) in bs {
                out.push_str(" | ");
                print_pat(p, env, out);
                out.push_str(" => ");
                pr(r, env, 200, out);
            }
            out.push_str(" end");
        }
    }
    if paren {
        out.push(')');
    }
}

fn binder_groups(groups: &[(Vec<String>, &Tm)], env: &dyn PrintEnv, out: &mut String) {
    let single = groups.len() == 1;
    for (i, (names, ty)) in groups.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let typed = !matches!(ty, Tm::Hole);
        if typed && !single {
            out.push('(');
        }
        out.push_str(&names.join(" "));
        if typed {
            out.push_str(" : ");
            pr(ty, env, 200, out);
            if !single {
                out.push(')');
            }
        }
    }
}

fn print_pat(p: &Pat, env: &dyn PrintEnv, out: &mut String) {
    match p {
        Pat::Wild => out.push('_'),
        Pat::Var(x) => out.push_str(x),
        Pat::Ctor(c, vs) => {
            let t = Tm::app(Tm::var(c), vs.iter().map(|v| Tm::var(v)).collect());
            pr(&t, env, 200, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Env(HashMap<String, PrintInfix>);

    impl PrintEnv for Env {
        fn infix_for(&self, head: &str) -> Option<&PrintInfix> {
            self.0.get(head)
        }
    }

    fn env() -> Env {
        let mut m = HashMap::new();
        m.insert("eq".into(), PrintInfix { op: "=".into(), level: 70, assoc: Assoc::None });
        m.insert("app".into(), PrintInfix { op: "++".into(), level: 60, assoc: Assoc::Right });
        m.insert("cons".into(), PrintInfix { op: "::".into(), level: 60, assoc: Assoc::Right });
        Env(m)
    }

    fn app(f: &str, args: Vec<Tm>) -> Tm {
        Tm::app(Tm::var(f), args)
    }

    #[test]
    fn infix_parenthesization() {
        let e = env();
        let l = app("app", vec![app("rev", vec![Tm::var("l2")]), app("rev", vec![Tm::var("l1")])]);
        let r = app("cons", vec![Tm::var("a0"), Tm::var("nil")]);
        let t = app("eq", vec![app("app", vec![l.clone(), r.clone()]), app("app", vec![app("rev", vec![Tm::var("l2")]), app("app", vec![app("rev", vec![Tm::var("l1")]), r])])]);
        assert_eq!(print(&t, &e), "(rev l2 ++ rev l1) ++ a0 :: nil = rev l2 ++ rev l1 ++ a0 :: nil");
    }

    #[test]
    fn parse_with_notations() {
        let mut syn = Syntax::with_builtins();
        syn.add("++", 60, Assoc::Right);
        let e = parse_term("forall {a} (l1 l2: list a), rev (l1 ++ l2) = rev l2 ++ rev l1", &syn).unwrap();
        let Expr::Prod(bs, body) = e else { panic!() };
        assert_eq!(bs.len(), 2);
        assert!(bs[0].implicit);
        let Expr::Notation { key, args } = *body else { panic!() };
        assert_eq!(key, "_ = _");
        assert!(matches!(&args[1], Expr::Notation { key, .. } if key == "_ ++ _"));
    }

    #[test]
    fn arrows_are_right_associative() {
        let syn = Syntax::with_builtins();
        let e = parse_term("A -> B -> C", &syn).unwrap();
        let Expr::Arrow(_, r) = e else { panic!() };
        assert!(matches!(*r, Expr::Arrow(..)));
    }

    #[test]
    fn qualified_identifiers_lex_as_one() {
        let t = lex("Coq.Lists.List.rev x.", &BTreeSet::new()).unwrap();
        assert_eq!(t[0], Tok::Ident("Coq.Lists.List.rev".into()));
        assert_eq!(t[1], Tok::Ident("x".into()));
        assert_eq!(t[2], Tok::Sym(".".into()));
    }

    #[test]
    fn qualid_json_reverses_dirpath() {
        assert_eq!(
            qualid_json("List.rev"),
            json!(["Ser_Qualid", ["DirPath", [["Id", "List"]]], ["Id", "rev"]])
        );
    }

    #[test]
    fn alpha_equivalence() {
        let a = Tm::Prod { name: Some("x".into()), ty: Box::new(Tm::var("nat")), body: Box::new(Tm::var("x")) };
        let b = Tm::Prod { name: Some("y".into()), ty: Box::new(Tm::var("nat")), body: Box::new(Tm::var("y")) };
        assert!(a.alpha_eq(&b));
    }
}
