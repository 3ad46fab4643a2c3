//! Sentence-level commands: parsing and their coq-lsp style AST.

use serde_json::{json, Value};

use crate::kernel::Tac;
use crate::term::{
    binders_json, constr_json, id_json, lex, name_json, qualid_json, Assoc, Binder, Expr, PResult, Parser, Syntax,
    Tok,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ender {
    Qed,
    Defined,
    Admitted,
}

#[derive(Debug, Clone)]
pub struct Ctor {
    pub name: String,
    pub binders: Vec<Binder>,
    pub ty: Option<Expr>,
}

#[derive(Debug, Clone)]
pub enum Cmd {
    Require { from: Option<String>, export: Option<bool>, libs: Vec<String> },
    Import { export: bool, mods: Vec<String> },
    Module { name: String, alias: Option<String> },
    End(String),
    Section(String),
    Theorem { kind: String, name: String, binders: Vec<Binder>, ty: Expr },
    Definition { kind: String, name: String, binders: Vec<Binder>, ty: Option<Expr>, body: Option<Expr> },
    Fixpoint { co: bool, name: String, binders: Vec<Binder>, ty: Option<Expr>, body: Expr },
    Inductive { kind: String, name: String, binders: Vec<Binder>, sort: Option<Expr>, ctors: Vec<Ctor> },
    Record { kind: String, name: String, binders: Vec<Binder>, sort: Option<Expr>, ctor: Option<String>, fields: Vec<(String, Expr)> },
    Instance { name: String, binders: Vec<Binder>, ty: Expr, has_body: bool },
    Assumption { kind: String, names: Vec<String>, ty: Expr },
    Notation { pattern: String, body: Expr, level: Option<u32>, assoc: Option<Assoc>, scope: Option<String> },
    Ltac { name: String, tac: Tac },
    Proof,
    EndProof(Ender),
    Abort,
    Bullet(String),
    OpenBrace,
    CloseBrace,
    Tactic(Tac),
    Check(Expr),
    Set { names: Vec<String>, unset: bool },
    OpenScope(String),
    Opaque(String),
}

const THEOREM_KINDS: &[&str] =
    &["Theorem", "Lemma", "Fact", "Remark", "Corollary", "Proposition", "Property"];

pub fn parse(text: &str, syntax: &Syntax) -> PResult<Cmd> {
    let t = text.trim();
    if t.is_empty() {
        return Err("Syntax error: empty sentence.".into());
    }
    if t == "{" {
        return Ok(Cmd::OpenBrace);
    }
    if t == "}" {
        return Ok(Cmd::CloseBrace);
    }
    if t.chars().all(|c| c == '-') || t.chars().all(|c| c == '+') || t.chars().all(|c| c == '*') {
        return Ok(Cmd::Bullet(t.to_string()));
    }
    let toks = lex(t, &syntax.symbols)?;
    let mut p = Parser::new(toks, syntax);
    // Attributes and locality are accepted and ignored.
    loop {
        if p.peek_sym("#") {
            while !p.at_end() && !p.peek_sym("]") {
                p.next();
            }
            p.next();
        } else if p.peek_kw("Local") || p.peek_kw("Global") || p.peek_kw("Program") {
            p.next();
        } else {
            break;
        }
    }
    let Some(Tok::Ident(kw)) = p.peek().cloned() else {
        return Err(p.unexpected("illegal begin of vernac"));
    };
    let cmd = match kw.as_str() {
        "From" => {
            p.next();
            let from = p.ident()?;
            if !p.eat_kw("Require") {
                return Err(p.unexpected("'Require' expected"));
            }
            require_tail(&mut p, Some(from))?
        }
        "Require" => {
            p.next();
            require_tail(&mut p, None)?
        }
        "Import" | "Export" => {
            p.next();
            let mut mods = vec![p.ident()?];
            while !p.at_end() {
                mods.push(p.ident()?);
            }
            Cmd::Import { export: kw == "Export", mods }
        }
        "Module" => {
            p.next();
            let name = p.ident()?;
            let alias = if p.eat_sym(":=") { Some(p.ident()?) } else { None };
            Cmd::Module { name, alias }
        }
        "End" => {
            p.next();
            Cmd::End(p.ident()?)
        }
        "Section" => {
            p.next();
            Cmd::Section(p.ident()?)
        }
        k if THEOREM_KINDS.contains(&k) => {
            p.next();
            let name = p.ident()?;
            let binders = p.binders(&[":"])?;
            p.expect_sym(":")?;
            let ty = p.term()?;
            Cmd::Theorem { kind: k.to_string(), name, binders, ty }
        }
        "Definition" | "Example" => {
            p.next();
            let name = p.ident()?;
            let binders = p.binders(&[":", ":="])?;
            let ty = if p.eat_sym(":") { Some(p.term()?) } else { None };
            let body = if p.eat_sym(":=") { Some(p.term()?) } else { None };
            if ty.is_none() && body.is_none() {
                return Err(p.unexpected("':=' expected"));
            }
            Cmd::Definition { kind: kw.clone(), name, binders, ty, body }
        }
        "Fixpoint" | "CoFixpoint" => {
            p.next();
            let name = p.ident()?;
            let binders = p.binders(&[":", ":="])?;
            if p.eat_sym("{") {
                if !p.eat_kw("struct") {
                    return Err(p.unexpected("'struct' expected"));
                }
                p.ident()?;
                p.expect_sym("}")?;
            }
            let ty = if p.eat_sym(":") { Some(p.term()?) } else { None };
            p.expect_sym(":=")?;
            let body = p.term()?;
            Cmd::Fixpoint { co: kw == "CoFixpoint", name, binders, ty, body }
        }
        "Inductive" | "CoInductive" | "Variant" => {
            p.next();
            let name = p.ident()?;
            let binders = p.binders(&[":", ":="])?;
            let sort = if p.eat_sym(":") { Some(p.term()?) } else { None };
            p.expect_sym(":=")?;
            p.eat_sym("|");
            let mut ctors = Vec::new();
            if !p.at_end() {
                loop {
                    let cname = p.ident()?;
                    let cb = p.binders(&[":", "|"])?;
                    let ty = if p.eat_sym(":") { Some(p.term()?) } else { None };
                    ctors.push(Ctor { name: cname, binders: cb, ty });
                    if !p.eat_sym("|") {
                        break;
                    }
                }
            }
            Cmd::Inductive { kind: kw.clone(), name, binders, sort, ctors }
        }
        "Record" | "Structure" | "Class" => {
            p.next();
            let name = p.ident()?;
            let binders = p.binders(&[":", ":="])?;
            let sort = if p.eat_sym(":") { Some(p.term()?) } else { None };
            p.expect_sym(":=")?;
            let ctor = match p.peek() {
                Some(Tok::Ident(_)) => Some(p.ident()?),
                _ => None,
            };
            p.expect_sym("{")?;
            let mut fields = Vec::new();
            while !p.peek_sym("}") {
                let f = p.ident()?;
                p.expect_sym(":")?;
                let ty = p.term()?;
                fields.push((f, ty));
                if !p.eat_sym(";") {
                    break;
                }
            }
            p.expect_sym("}")?;
            Cmd::Record { kind: kw.clone(), name, binders, sort, ctor, fields }
        }
        "Instance" => {
            p.next();
            let name = p.ident()?;
            let binders = p.binders(&[":"])?;
            p.expect_sym(":")?;
            let ty = p.term_at(199)?;
            let has_body = p.eat_sym(":=");
            // Instance bodies use record syntax the toy parser does not model.
            while !p.at_end() {
                p.next();
            }
            Cmd::Instance { name, binders, ty, has_body }
        }
        "Axiom" | "Parameter" | "Hypothesis" | "Variable" | "Variables" | "Conjecture" | "Axioms" | "Parameters" => {
            p.next();
            let mut names = vec![p.ident()?];
            while let Some(Tok::Ident(_)) = p.peek() {
                names.push(p.ident()?);
            }
            p.expect_sym(":")?;
            let ty = p.term()?;
            Cmd::Assumption { kind: kw.clone(), names, ty }
        }
        "Notation" => {
            p.next();
            let pattern = match p.next() {
                Some(Tok::Str(s)) => s,
                _ => return Err("Syntax error: string expected after 'Notation'.".into()),
            };
            p.expect_sym(":=")?;
            // A parenthesized body must not swallow the modifier list.
            let body = if p.eat_sym("(") {
                let b = p.term()?;
                p.expect_sym(")")?;
                b
            } else {
                p.term()?
            };
            let (mut level, mut assoc) = (None, None);
            if p.eat_sym("(") {
                loop {
                    if p.eat_kw("at") {
                        if !p.eat_kw("level") {
                            return Err(p.unexpected("'level' expected"));
                        }
                        match p.next() {
                            Some(Tok::Num(n)) => level = n.parse().ok(),
                            _ => return Err("Syntax error: level number expected.".into()),
                        }
                    } else if p.eat_kw("left") {
                        assoc = Some(Assoc::Left);
                        p.eat_kw("associativity");
                    } else if p.eat_kw("right") {
                        assoc = Some(Assoc::Right);
                        p.eat_kw("associativity");
                    } else if p.eat_kw("no") {
                        assoc = Some(Assoc::None);
                        p.eat_kw("associativity");
                    } else {
                        // Other modifiers (`only parsing`, `format`, ...) are skipped.
                        while !p.at_end() && !p.peek_sym(",") && !p.peek_sym(")") {
                            p.next();
                        }
                    }
                    if !p.eat_sym(",") {
                        break;
                    }
                }
                p.expect_sym(")")?;
            }
            let scope = if p.eat_sym(":") { Some(p.ident()?) } else { None };
            Cmd::Notation { pattern, body, level, assoc, scope }
        }
        "Ltac" => {
            p.next();
            let name = p.ident()?;
            p.expect_sym(":=")?;
            let tac = tactic(&mut p)?;
            Cmd::Ltac { name, tac }
        }
        "Proof" => {
            p.next();
            while !p.at_end() {
                p.next();
            }
            return Ok(Cmd::Proof);
        }
        "Qed" | "Defined" | "Admitted" | "Save" => {
            p.next();
            if kw == "Save" {
                p.ident()?;
            }
            Cmd::EndProof(match kw.as_str() {
                "Defined" => Ender::Defined,
                "Admitted" => Ender::Admitted,
                _ => Ender::Qed,
            })
        }
        "Abort" => {
            p.next();
            p.eat_kw("All");
            Cmd::Abort
        }
        "Check" | "Compute" => {
            p.next();
            Cmd::Check(p.term()?)
        }
        "Set" | "Unset" => {
            p.next();
            let mut names = Vec::new();
            while let Some(Tok::Ident(_)) = p.peek() {
                names.push(p.ident()?);
            }
            Cmd::Set { names, unset: kw == "Unset" }
        }
        "Open" | "Close" => {
            p.next();
            if !p.eat_kw("Scope") {
                return Err(p.unexpected("'Scope' expected"));
            }
            Cmd::OpenScope(p.ident()?)
        }
        "Print" | "Search" | "About" | "Locate" | "Arguments" | "Hint" | "Opaque" | "Transparent" | "Implicit" => {
            while !p.at_end() {
                p.next();
            }
            return Ok(Cmd::Opaque(kw.clone()));
        }
        _ => Cmd::Tactic(tactic(&mut p)?),
    };
    p.expect_end()?;
    Ok(cmd)
}

fn require_tail(p: &mut Parser, from: Option<String>) -> PResult<Cmd> {
    let export = if p.eat_kw("Import") {
        Some(false)
    } else if p.eat_kw("Export") {
        Some(true)
    } else {
        None
    };
    let mut libs = vec![p.ident()?];
    while !p.at_end() {
        libs.push(p.ident()?);
    }
    Ok(Cmd::Require { from, export, libs })
}

// ---------------------------------------------------------------------------
// Tactics

fn tactic(p: &mut Parser) -> PResult<Tac> {
    let mut t = tactic_atom(p)?;
    while p.eat_sym(";") {
        let next = tactic_atom(p)?;
        t = Tac::Seq(Box::new(t), Box::new(next));
    }
    Ok(t)
}

fn idents(p: &mut Parser) -> PResult<Vec<String>> {
    let mut out = Vec::new();
    while let Some(Tok::Ident(_)) = p.peek() {
        out.push(p.ident()?);
    }
    Ok(out)
}

fn tactic_atom(p: &mut Parser) -> PResult<Tac> {
    if p.eat_sym("(") {
        let t = tactic(p)?;
        p.expect_sym(")")?;
        return Ok(t);
    }
    let name = match p.peek() {
        Some(Tok::Ident(s)) => s.clone(),
        _ => return Err(p.unexpected("tactic expected")),
    };
    p.next();
    Ok(match name.as_str() {
        "intros" => Tac::Intros(idents(p)?),
        "intro" => Tac::Intro(match p.peek() {
            Some(Tok::Ident(_)) => Some(p.ident()?),
            _ => None,
        }),
        "induction" => Tac::Induction(p.ident()?),
        "destruct" => Tac::Destruct(p.ident()?),
        "simpl" => Tac::Simpl,
        "unfold" => {
            let mut names = vec![p.ident()?];
            while p.eat_sym(",") {
                names.push(p.ident()?);
            }
            Tac::Unfold(names)
        }
        "rewrite" => {
            let mut items = Vec::new();
            loop {
                let rtl = p.eat_sym("<-");
                p.eat_sym("->");
                let t = p.term_at(9)?;
                items.push((rtl, t));
                if !p.eat_sym(",") {
                    break;
                }
            }
            Tac::Rewrite(items)
        }
        "reflexivity" => Tac::Reflexivity,
        "assumption" => Tac::Assumption,
        "exact" => Tac::Exact(p.term_at(9)?),
        "apply" => Tac::Apply(p.term_at(9)?),
        "split" => Tac::Split,
        "left" => Tac::Left,
        "right" => Tac::Right,
        "constructor" => Tac::Constructor,
        "trivial" => Tac::Trivial,
        "auto" => Tac::Auto,
        "admit" => Tac::Admit,
        "idtac" => Tac::Idtac,
        "fail" => Tac::Fail,
        "try" => Tac::Try(Box::new(tactic_atom(p)?)),
        "repeat" => Tac::Repeat(Box::new(tactic_atom(p)?)),
        _ => Tac::Call(name),
    })
}

fn ml(name: &str) -> Value {
    json!(["TacML", [{"mltac_name": {"mltac_plugin": "coq-core.plugins.ltac", "mltac_tactic": name}, "mltac_index": 0}, []]])
}

fn intro_pattern(n: &str) -> Value {
    json!({"v": ["IntroNaming", ["IntroIdentifier", id_json(n)]], "loc": null})
}

pub fn tactic_json(t: &Tac) -> Value {
    match t {
        Tac::Intros(ns) => {
            let pats: Vec<Value> = if ns.is_empty() {
                vec![json!({"v": ["IntroForthcoming", false], "loc": null})]
            } else {
                ns.iter().map(|n| intro_pattern(n)).collect()
            };
            json!(["TacAtom", ["TacIntroPattern", false, pats]])
        }
        Tac::Intro(n) => {
            let pats: Vec<Value> = n.iter().map(|n| intro_pattern(n)).collect();
            json!(["TacAtom", ["TacIntroPattern", false, pats]])
        }
        Tac::Induction(x) | Tac::Destruct(x) => json!([
            "TacAtom",
            ["TacInductionDestruct", matches!(t, Tac::Induction(_)), false, [[["ElimOnIdent", id_json(x)], null, null]]]
        ]),
        Tac::Simpl => json!(["TacAtom", ["TacReduce", ["Simpl", null, null], null]]),
        Tac::Unfold(ns) => {
            let items: Vec<Value> = ns.iter().map(|n| json!([["AllOccurrences"], ["AN", qualid_json(n)]])).collect();
            json!(["TacAtom", ["TacReduce", ["Unfold", items], null]])
        }
        Tac::Rewrite(items) => {
            let items: Vec<Value> = items
                .iter()
                .map(|(rtl, e)| json!([!rtl, ["Precisely", 1], [null, [constr_json(e), "NoBindings"]]]))
                .collect();
            json!(["TacAtom", ["TacRewrite", false, items, null, null]])
        }
        Tac::Exact(e) => json!(["TacAtom", ["TacExact", constr_json(e)]]),
        Tac::Apply(e) => json!(["TacAtom", ["TacApply", true, false, [[null, [constr_json(e), "NoBindings"]]], null]]),
        Tac::Reflexivity => ml("reflexivity"),
        Tac::Assumption => ml("assumption"),
        Tac::Split => ml("split"),
        Tac::Left => ml("left"),
        Tac::Right => ml("right"),
        Tac::Constructor => ml("constructor"),
        Tac::Trivial => json!(["TacAtom", ["TacTrivial", [], null]]),
        Tac::Auto => json!(["TacAtom", ["TacAuto", null, [], null]]),
        Tac::Admit => ml("admit"),
        Tac::Idtac => json!(["TacId", []]),
        Tac::Fail => json!(["TacFail", "TacLocal", ["ArgArg", 0], []]),
        Tac::Seq(a, b) => json!(["TacThen", tactic_json(a), tactic_json(b)]),
        Tac::Try(a) => json!(["TacTry", tactic_json(a)]),
        Tac::Repeat(a) => json!(["TacRepeat", tactic_json(a)]),
        Tac::Call(n) => json!(["TacCall", {"v": [qualid_json(n), []], "loc": null}]),
    }
}

// ---------------------------------------------------------------------------
// Sentence AST

fn lident(n: &str) -> Value {
    json!({"v": id_json(n), "loc": null})
}

fn pure(e: Value) -> Value {
    json!(["VernacSynPure", e])
}

fn synterp(e: Value) -> Value {
    json!(["VernacSynterp", e])
}

fn ctor_type(c: &Ctor, ind: &str, params: &[Binder]) -> Expr {
    let result = c.ty.clone().unwrap_or_else(|| {
        let args: Vec<Expr> = params.iter().flat_map(|b| b.names.iter().map(|n| Expr::Ref(n.clone()))).collect();
        if args.is_empty() {
            Expr::Ref(ind.to_string())
        } else {
            Expr::App(Box::new(Expr::Ref(ind.to_string())), args)
        }
    });
    if c.binders.is_empty() {
        result
    } else {
        Expr::Prod(c.binders.clone(), Box::new(result))
    }
}

pub fn ast(cmd: &Cmd) -> Value {
    let expr = match cmd {
        Cmd::Require { from, export, libs } => {
            let export = match export {
                None => Value::Null,
                Some(false) => json!([["Import"], null]),
                Some(true) => json!([["Export"], null]),
            };
            let libs: Vec<Value> = libs.iter().map(|l| json!([qualid_json(l), ["ImportAll"]])).collect();
            synterp(json!(["VernacRequire", from.as_deref().map(qualid_json), export, libs]))
        }
        Cmd::Import { export, mods } => {
            let cat = if *export { "Export" } else { "Import" };
            let mods: Vec<Value> = mods.iter().map(|m| json!([qualid_json(m), ["ImportAll"]])).collect();
            synterp(json!(["VernacImport", [[cat], null], mods]))
        }
        Cmd::Module { name, alias } => {
            let body: Vec<Value> = alias
                .iter()
                .map(|a| json!([{"v": ["CMident", qualid_json(a)], "loc": null}, "DefaultInline"]))
                .collect();
            synterp(json!(["VernacDefineModule", null, lident(name), [], ["Check", []], body]))
        }
        Cmd::End(n) => synterp(json!(["VernacEndSegment", lident(n)])),
        Cmd::Section(n) => synterp(json!(["VernacBeginSection", lident(n)])),
        Cmd::Theorem { kind, name, binders, ty } => pure(json!([
            "VernacStartTheoremProof",
            [kind],
            [[[lident(name), null], [binders_json(binders), constr_json(ty)]]]
        ])),
        Cmd::Definition { kind, name, binders, ty, body } => {
            let def = match body {
                Some(b) => json!(["DefineBody", binders_json(binders), null, constr_json(b), ty.as_ref().map(constr_json)]),
                None => json!(["ProveBody", binders_json(binders), ty.as_ref().map(constr_json)]),
            };
            pure(json!(["VernacDefinition", [["NoDischarge"], [kind]], [name_json(name), null], def]))
        }
        Cmd::Fixpoint { co, name, binders, ty, body } => {
            let node = if *co { "VernacCoFixpoint" } else { "VernacFixpoint" };
            let rtype = constr_json(ty.as_ref().unwrap_or(&Expr::Hole));
            pure(json!([
                node,
                ["NoDischarge"],
                [{
                    "fname": lident(name),
                    "univs": null,
                    "rec_order": null,
                    "binders": binders_json(binders),
                    "rtype": rtype,
                    "body_def": constr_json(body),
                    "notations": []
                }]
            ]))
        }
        Cmd::Inductive { kind, name, binders, sort, ctors } => {
            let kind_json = match kind.as_str() {
                "Inductive" => json!(["Inductive_kw"]),
                other => json!([other]),
            };
            let cs: Vec<Value> = ctors
                .iter()
                .map(|c| json!([false, [lident(&c.name), constr_json(&ctor_type(c, name, binders))]]))
                .collect();
            pure(json!([
                "VernacInductive",
                kind_json,
                [[[[false, [lident(name), null]], [binders_json(binders), null], sort.as_ref().map(constr_json), ["Constructors", cs]], []]]
            ]))
        }
        Cmd::Record { kind, name, binders, sort, ctor, fields } => {
            let kind_json = match kind.as_str() {
                "Class" => json!(["Class", true]),
                other => json!([other]),
            };
            let fs: Vec<Value> = fields
                .iter()
                .map(|(f, t)| json!([["AssumExpr", name_json(f), [], constr_json(t)], {"rf_priority": null}]))
                .collect();
            pure(json!([
                "VernacInductive",
                kind_json,
                [[[[false, [lident(name), null]], [binders_json(binders), null], sort.as_ref().map(constr_json), ["RecordDecl", ctor.as_deref().map(lident), fs, null]], []]]
            ]))
        }
        Cmd::Instance { name, binders, ty, has_body } => pure(json!([
            "VernacInstance",
            [name_json(name), null],
            binders_json(binders),
            constr_json(ty),
            has_body
        ])),
        Cmd::Assumption { kind, names, ty } => {
            let ids: Vec<Value> = names.iter().map(|n| json!([lident(n), null])).collect();
            pure(json!(["VernacAssumption", [["NoDischarge"], [kind]], "NoInline", [[false, [ids, constr_json(ty)]]]]))
        }
        Cmd::Notation { pattern, body, level, assoc, scope } => {
            let mut mods = Vec::new();
            if let Some(l) = level {
                mods.push(json!({"v": ["SetLevel", l], "loc": null}));
            }
            if let Some(a) = assoc {
                let a = match a {
                    Assoc::Left => "LeftA",
                    Assoc::Right => "RightA",
                    Assoc::None => "NonA",
                };
                mods.push(json!({"v": ["SetAssoc", [a]], "loc": null}));
            }
            synterp(json!(["VernacNotation", false, constr_json(body), [{"v": pattern, "loc": null}, mods], scope]))
        }
        Cmd::Ltac { name, tac } => pure(json!([
            "VernacExtend",
            ["VernacDeclareTacticDefinition", 0],
            [[["TacticDefinition", lident(name), tactic_json(tac)]]]
        ])),
        Cmd::Proof => pure(json!(["VernacProof", null, null])),
        Cmd::EndProof(e) => pure(json!([
            "VernacEndProof",
            match e {
                Ender::Qed => json!(["Proved", ["Opaque"], null]),
                Ender::Defined => json!(["Proved", ["Transparent"], null]),
                Ender::Admitted => json!(["Admitted"]),
            }
        ])),
        Cmd::Abort => pure(json!(["VernacAbort"])),
        Cmd::Bullet(b) => {
            let kind = match b.chars().next() {
                Some('-') => "Dash",
                Some('+') => "Plus",
                _ => "Star",
            };
            pure(json!(["VernacBullet", [kind, b.len()]]))
        }
        Cmd::OpenBrace => pure(json!(["VernacSubproof", null])),
        Cmd::CloseBrace => pure(json!(["VernacEndSubproof"])),
        Cmd::Tactic(t) => pure(json!(["VernacExtend", ["VernacSolve", 0], [null, tactic_json(t), false]])),
        Cmd::Check(e) => pure(json!(["VernacCheckMayEval", null, null, constr_json(e)])),
        Cmd::Set { names, unset } => synterp(json!([
            "VernacSetOption",
            false,
            names,
            if *unset { json!(["OptionUnset"]) } else { json!(["OptionSetTrue"]) }
        ])),
        Cmd::OpenScope(s) => pure(json!(["VernacOpenCloseScope", true, [s]])),
        Cmd::Opaque(kw) => pure(json!([format!("Vernac{kw}")])),
    };
    json!({"v": {"control": [], "attrs": [], "expr": expr}, "loc": null})
}
