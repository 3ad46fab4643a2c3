//! Reading coq-lsp sentence ASTs: which names a step defines, which
//! modules it opens or closes, which libraries it requires, and where
//! proofs start and end.
//!
//! The AST is a serialized `vernac_control` node. Coq 8.18+ wraps the
//! command in `VernacSynPure`/`VernacSynterp`; 8.17 does not. Both are
//! accepted. Anything unrecognized defines nothing.

use serde_json::Value;

use crate::context::TermType;

/// `Module`/`Section` nesting.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Segment {
    Module(String),
    Section(String),
}

impl Segment {
    pub fn name(&self) -> &str {
        match self {
            Segment::Module(n) | Segment::Section(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentOp {
    Begin(Segment),
    End(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProofEnd {
    /// `Qed`, `Defined`, `Save`.
    Closed,
    /// `Admitted`.
    Admitted,
    /// `Abort`.
    Aborted,
}

/// What one step does to the environment, as far as it can be read off the AST.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    /// Names as written in the step, not yet module-qualified.
    pub defines: Vec<(String, TermType)>,
    /// The pattern string of a `Notation`/`Infix`.
    pub notation: Option<String>,
    pub segment: Option<SegmentOp>,
    /// Logical names passed to `Require`, with any `From` prefix joined on.
    pub requires: Vec<String>,
    /// Modules opened by `Import`/`Export`.
    pub imports: Vec<String>,
    /// The step states a theorem whose proof follows; the name is `defines[0]`.
    pub starts_proof: bool,
    pub ends_proof: Option<ProofEnd>,
}

/// The command node: `[tag, args...]`.
pub fn command(ast: &Value) -> Option<(&str, &[Value])> {
    let expr = ast.get("v").and_then(|v| v.get("expr")).unwrap_or(ast);
    let arr = expr.as_array()?;
    let arr = match arr.first().and_then(Value::as_str) {
        Some("VernacSynPure" | "VernacSynterp") => arr.get(1)?.as_array()?,
        _ => arr,
    };
    let tag = arr.first()?.as_str()?;
    Some((tag, &arr[1..]))
}

/// Strip `{"v": x, "loc": _}` wrappers.
fn unloc(v: &Value) -> &Value {
    let mut v = v;
    while let Some(inner) = v.as_object().and_then(|o| o.get("v")) {
        v = inner;
    }
    v
}

/// `["Id", n]`, `["Name", ["Id", n]]`, or either wrapped in a location.
pub fn ident(v: &Value) -> Option<String> {
    let v = unloc(v);
    let arr = v.as_array()?;
    match arr.first()?.as_str()? {
        "Id" => arr.get(1)?.as_str().map(String::from),
        "Name" => ident(arr.get(1)?),
        _ => None,
    }
}

/// `["Ser_Qualid", ["DirPath", [rev ids]], ["Id", n]]` as a dotted name.
pub fn qualid(v: &Value) -> Option<String> {
    let v = unloc(v);
    let arr = v.as_array()?;
    if arr.first()?.as_str()? != "Ser_Qualid" {
        return None;
    }
    let dir = arr.get(1)?.as_array()?;
    let mut parts: Vec<String> = match dir.get(1).and_then(Value::as_array) {
        Some(ids) => ids.iter().rev().filter_map(ident).collect(),
        None => vec![],
    };
    parts.push(ident(arr.get(2)?)?);
    Some(parts.join("."))
}

fn str_at<'a>(v: &'a Value, path: &[usize]) -> Option<&'a str> {
    let mut cur = v;
    for &i in path {
        cur = unloc(cur).as_array()?.get(i)?;
    }
    cur.as_str()
}

fn theorem_kind(kind: &str) -> TermType {
    match kind {
        "Theorem" => TermType::Theorem,
        "Lemma" => TermType::Lemma,
        "Fact" => TermType::Fact,
        "Remark" => TermType::Remark,
        "Corollary" => TermType::Corollary,
        "Proposition" => TermType::Proposition,
        "Property" => TermType::Property,
        "Definition" | "Example" => TermType::Definition,
        _ => TermType::Other,
    }
}

fn definition_kind(kind: &str) -> TermType {
    match kind {
        "Definition" | "Example" | "Let" => TermType::Definition,
        "Instance" => TermType::Instance,
        "Fixpoint" => TermType::Fixpoint,
        "CoFixpoint" => TermType::CoFixpoint,
        _ => TermType::Other,
    }
}

fn inductive_kind(kind: &Value) -> TermType {
    match str_at(kind, &[0]) {
        Some("Inductive_kw") => TermType::Inductive,
        Some("CoInductive") => TermType::CoInductive,
        Some("Variant") => TermType::Variant,
        Some("Record" | "Structure") => TermType::Record,
        Some("Class") => TermType::Class,
        _ => TermType::Other,
    }
}

/// Walk `v` and call `f` on every nested node.
fn walk<'a>(v: &'a Value, f: &mut impl FnMut(&'a Value)) {
    f(v);
    match v {
        Value::Array(items) => items.iter().for_each(|i| walk(i, f)),
        Value::Object(map) => map.values().for_each(|i| walk(i, f)),
        _ => {}
    }
}

fn inductive_names(args: &[Value], out: &mut Vec<(String, TermType)>) {
    let ty = args.first().map(inductive_kind).unwrap_or(TermType::Other);
    let Some(blocks) = args.get(1).and_then(Value::as_array) else { return };
    for block in blocks {
        // [[[coe, [lident, univs]], params, sort, body], notations]
        let Some(decl) = block.get(0).and_then(Value::as_array) else { continue };
        if let Some(name) = decl.first().and_then(|d| d.get(1)).and_then(|d| d.get(0)).and_then(ident) {
            out.push((name.clone(), ty));
            let body = decl.get(3);
            match body.and_then(|b| str_at(b, &[0])) {
                Some("Constructors") => {
                    for c in body.and_then(|b| b.get(1)).and_then(Value::as_array).into_iter().flatten() {
                        if let Some(n) = c.get(1).and_then(|c| c.get(0)).and_then(ident) {
                            out.push((n, ty));
                        }
                    }
                }
                Some("RecordDecl") => {
                    let b = body.unwrap();
                    let ctor = b.get(1).and_then(ident).unwrap_or_else(|| format!("Build_{name}"));
                    out.push((ctor, ty));
                    for field in b.get(2).and_then(Value::as_array).into_iter().flatten() {
                        // [["AssumExpr", name, binders, type], attrs]
                        if let Some(n) = field.get(0).and_then(|f| f.get(1)).and_then(ident) {
                            out.push((n, ty));
                        }
                    }
                }
                _ => {}
            }
        }
    }
}

/// Analyze one step's AST.
pub fn analyze(ast: &Value) -> StepInfo {
    let mut info = StepInfo::default();
    let Some((tag, args)) = command(ast) else { return info };
    match tag {
        "VernacStartTheoremProof" => {
            let ty = args.first().and_then(|k| str_at(k, &[0])).map(theorem_kind).unwrap_or(TermType::Other);
            for thm in args.get(1).and_then(Value::as_array).into_iter().flatten() {
                if let Some(n) = thm.get(0).and_then(|t| t.get(0)).and_then(ident) {
                    info.defines.push((n, ty));
                }
            }
            info.starts_proof = !info.defines.is_empty();
        }
        "VernacDefinition" => {
            let ty = args.first().and_then(|k| str_at(k, &[1, 0])).map(definition_kind).unwrap_or(TermType::Other);
            if let Some(n) = args.get(1).and_then(|a| a.get(0)).and_then(ident) {
                info.defines.push((n, ty));
                info.starts_proof = args.get(2).and_then(|b| str_at(b, &[0])) == Some("ProveBody");
            }
        }
        "VernacFixpoint" | "VernacCoFixpoint" => {
            let ty = if tag == "VernacFixpoint" { TermType::Fixpoint } else { TermType::CoFixpoint };
            for rec in args.get(1).and_then(Value::as_array).into_iter().flatten() {
                if let Some(n) = rec.get("fname").and_then(ident) {
                    info.defines.push((n, ty));
                    // A fixpoint without body is proved interactively.
                    info.starts_proof |= rec.get("body_def").is_some_and(Value::is_null);
                }
            }
        }
        "VernacInductive" => inductive_names(args, &mut info.defines),
        "VernacInstance" => {
            if let Some(n) = args.first().and_then(|a| a.get(0)).and_then(ident) {
                info.defines.push((n, TermType::Instance));
                info.starts_proof = matches!(args.get(3), Some(Value::Bool(false) | Value::Null));
            }
        }
        "VernacAssumption" => {
            for group in args.get(2).and_then(Value::as_array).into_iter().flatten() {
                for id in group.get(1).and_then(|g| g.get(0)).and_then(Value::as_array).into_iter().flatten() {
                    if let Some(n) = id.get(0).and_then(ident) {
                        info.defines.push((n, TermType::Other));
                    }
                }
            }
        }
        "VernacNotation" | "VernacInfix" => {
            let pat = args.iter().find_map(|a| a.as_array().and_then(|p| p.first()).map(unloc).and_then(Value::as_str));
            info.notation = pat.map(String::from);
        }
        "VernacSyntacticDefinition" => {
            if let Some(n) = args.first().and_then(ident) {
                info.defines.push((n, TermType::Notation));
            }
        }
        "VernacExtend" => {
            let ext = args.first().and_then(|e| str_at(e, &[0])).unwrap_or_default();
            if ext == "VernacDeclareTacticDefinition" {
                walk(args.get(1).unwrap_or(&Value::Null), &mut |v| {
                    if let Some(arr) = v.as_array() {
                        if arr.first().and_then(Value::as_str) == Some("TacticDefinition") {
                            if let Some(n) = arr.get(1).and_then(ident) {
                                info.defines.push((n, TermType::Tactic));
                            }
                        }
                    }
                });
            }
        }
        "VernacEndProof" => {
            info.ends_proof = Some(match args.first().and_then(|a| str_at(a, &[0])) {
                Some("Admitted") => ProofEnd::Admitted,
                _ => ProofEnd::Closed,
            });
        }
        "VernacAbort" | "VernacAbortAll" => info.ends_proof = Some(ProofEnd::Aborted),
        "VernacDefineModule" | "VernacDeclareModuleType" => {
            let name = args.get(1).and_then(ident);
            let body_empty = args.last().and_then(Value::as_array).is_some_and(Vec::is_empty);
            if let (Some(n), true) = (name, body_empty) {
                info.segment = Some(SegmentOp::Begin(Segment::Module(n)));
            }
        }
        "VernacBeginSection" => {
            if let Some(n) = args.first().and_then(ident) {
                info.segment = Some(SegmentOp::Begin(Segment::Section(n)));
            }
        }
        "VernacEndSegment" => {
            if let Some(n) = args.first().and_then(ident) {
                info.segment = Some(SegmentOp::End(n));
            }
        }
        "VernacRequire" => {
            let from = args.first().and_then(qualid);
            for lib in args.get(2).and_then(Value::as_array).into_iter().flatten() {
                if let Some(q) = lib.get(0).and_then(qualid).or_else(|| qualid(lib)) {
                    info.requires.push(match &from {
                        Some(f) => format!("{f}.{q}"),
                        None => q,
                    });
                }
            }
        }
        "VernacImport" => {
            for m in args.get(1).and_then(Value::as_array).into_iter().flatten() {
                if let Some(q) = m.get(0).and_then(qualid).or_else(|| qualid(m)) {
                    info.imports.push(q);
                }
            }
        }
        _ => {}
    }
    info
}

/// A reference found in a step, in source order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reference {
    Name(String),
    /// A notation key such as `_ ++ _`.
    Notation(String),
}

/// Every qualified identifier and notation application in the AST.
pub fn references(ast: &Value) -> Vec<Reference> {
    let mut out = Vec::new();
    walk(ast, &mut |v| {
        let Some(arr) = v.as_array() else { return };
        match arr.first().and_then(Value::as_str) {
            Some("Ser_Qualid") => {
                if let Some(q) = qualid(v) {
                    out.push(Reference::Name(q));
                }
            }
            Some("CNotation" | "CPatNotation") => {
                // [tag, scope, [entry, key], ...]
                if let Some(key) = arr.get(2).and_then(|k| k.get(1)).and_then(Value::as_str) {
                    out.push(Reference::Notation(key.to_string()));
                }
            }
            _ => {}
        }
    });
    out
}

const NOTATION_KEYWORDS: &[&str] =
    &["if", "then", "else", "fun", "forall", "exists", "match", "with", "end", "let", "in", "as", "return"];

/// Normalize a notation pattern to its key: variables become `_`,
/// quoted symbols lose their quotes. `"x ++ y"` and `"_ ++ _"` give `_ ++ _`.
pub fn notation_key(pattern: &str) -> String {
    pattern
        .split_whitespace()
        .map(|tok| {
            if tok.len() >= 2 && tok.starts_with('\'') && tok.ends_with('\'') {
                return tok[1..tok.len() - 1].to_string();
            }
            let is_var = tok.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
                && tok.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '\'')
                && !NOTATION_KEYWORDS.contains(&tok);
            if is_var {
                "_".to_string()
            } else {
                tok.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn lid(n: &str) -> Value {
        json!({"v": ["Id", n], "loc": null})
    }

    fn q(path: &[&str], n: &str) -> Value {
        let dir: Vec<Value> = path.iter().rev().map(|p| json!(["Id", p])).collect();
        json!(["Ser_Qualid", ["DirPath", dir], ["Id", n]])
    }

    fn wrap(expr: Value) -> Value {
        json!({"v": {"control": [], "attrs": [], "expr": expr}, "loc": null})
    }

    #[test]
    fn lemma_starts_proof() {
        let ast = wrap(json!(["VernacSynPure", ["VernacStartTheoremProof", ["Lemma"], [[[lid("rev_append"), null], [[], null]]]]]));
        let info = analyze(&ast);
        assert_eq!(info.defines, vec![("rev_append".to_string(), TermType::Lemma)]);
        assert!(info.starts_proof);
    }

    #[test]
    fn unwrapped_8_17_form() {
        let ast = wrap(json!(["VernacStartTheoremProof", ["Theorem"], [[[lid("t"), null], [[], null]]]]));
        assert_eq!(analyze(&ast).defines[0].1, TermType::Theorem);
    }

    #[test]
    fn inductive_defines_constructors() {
        let ast = wrap(json!(["VernacSynPure", ["VernacInductive", ["Inductive_kw"], [[[[false, [lid("nat"), null]], [[], null], null,
            ["Constructors", [[false, [lid("O"), null]], [false, [lid("S"), null]]]]], []]]]]));
        let names: Vec<String> = analyze(&ast).defines.into_iter().map(|d| d.0).collect();
        assert_eq!(names, vec!["nat", "O", "S"]);
    }

    #[test]
    fn record_defines_projections() {
        let field = json!([["AssumExpr", {"v": ["Name", ["Id", "px"]], "loc": null}, [], null], {}]);
        let ast = wrap(json!(["VernacSynPure", ["VernacInductive", ["Record"], [[[[false, [lid("pt"), null]], [[], null], null,
            ["RecordDecl", null, [field], null]], []]]]]));
        let d = analyze(&ast).defines;
        assert_eq!(d.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(), vec!["pt", "Build_pt", "px"]);
        assert!(d.iter().all(|x| x.1 == TermType::Record));
    }

    #[test]
    fn require_with_from() {
        let ast = wrap(json!(["VernacSynterp", ["VernacRequire", q(&[], "Coq"), null, [[q(&["Lists"], "List"), ["ImportAll"]]]]]));
        assert_eq!(analyze(&ast).requires, vec!["Coq.Lists.List"]);
    }

    #[test]
    fn modules_and_aliases() {
        let open = wrap(json!(["VernacSynterp", ["VernacDefineModule", null, lid("M"), [], ["Check", []], []]]));
        assert_eq!(analyze(&open).segment, Some(SegmentOp::Begin(Segment::Module("M".into()))));
        let alias = wrap(json!(["VernacSynterp", ["VernacDefineModule", null, lid("N"), [], ["Check", []], [[{"v": ["CMident", q(&[], "M")]}, "DefaultInline"]]]]));
        assert_eq!(analyze(&alias).segment, None);
    }

    #[test]
    fn proof_enders() {
        let qed = wrap(json!(["VernacSynPure", ["VernacEndProof", ["Proved", ["Opaque"], null]]]));
        assert_eq!(analyze(&qed).ends_proof, Some(ProofEnd::Closed));
        let adm = wrap(json!(["VernacSynPure", ["VernacEndProof", ["Admitted"]]]));
        assert_eq!(analyze(&adm).ends_proof, Some(ProofEnd::Admitted));
    }

    #[test]
    fn references_in_order() {
        let ast = json!(["CApp", ["CRef", q(&[], "rev"), null], [[["CNotation", null, [["InConstrEntry"], "_ ++ _"], [[["CRef", q(&["M"], "l1"), null]], [], [], []]], null]]]);
        assert_eq!(
            references(&ast),
            vec![
                Reference::Name("rev".into()),
                Reference::Notation("_ ++ _".into()),
                Reference::Name("M.l1".into())
            ]
        );
    }

    #[test]
    fn unknown_nodes_define_nothing() {
        assert_eq!(analyze(&json!(null)), StepInfo::default());
        assert_eq!(analyze(&wrap(json!(["VernacSynPure", ["VernacFrobnicate"]]))), StepInfo::default());
    }

    #[test]
    fn notation_keys() {
        assert_eq!(notation_key("x ++ y"), "_ ++ _");
        assert_eq!(notation_key("_ ++ _"), "_ ++ _");
        assert_eq!(notation_key("[ x ; .. ; y ]"), "[ _ ; .. ; _ ]");
        assert_eq!(notation_key("'exists' x , p"), "exists _ , _");
        assert_eq!(notation_key("if c then a else b"), "if _ then _ else _");
    }
}
