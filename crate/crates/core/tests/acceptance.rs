//! One PASS/FAIL line per acceptance criterion. Runs without Coq: the
//! simulator stands in for coq-lsp unless `COQNAV_LIVE_SERVER` names a real
//! server command (with `COQNAV_LIVE_COQLIB` pointing at its `theories`).

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use coqnav::config::{Config, LoadPathBinding};
use coqnav::context::TermType;
use coqnav::extract::{extract, ExtractOptions, MockMode, SUMMARY_FILE};
use coqnav::goals::GoalAnswer;
use coqnav::{Change, CoqFile, Error, ProofChange, ProofFile, ProofStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Debug>(r: Result<T, E>, what: &str) -> Result<T, String> {
    r.map_err(|e| format!("{what}: {e:?}"))
}

fn live_server() -> Option<Config> {
    let cmd = std::env::var("COQNAV_LIVE_SERVER").ok().filter(|s| !s.trim().is_empty())?;
    let mut c = Config::default().with_command(cmd.split_whitespace());
    if let Ok(lib) = std::env::var("COQNAV_LIVE_COQLIB") {
        c.workspace.library_roots = vec![LoadPathBinding { dir: PathBuf::from(lib), prefix: "Coq".into() }];
    }
    Some(c)
}

fn sample_file(config: &Config) -> Result<(tempfile::TempDir, PathBuf, ProofFile), String> {
    let dir = common::workspace(&[("test.v", &common::sample())]);
    let path = dir.path().join("test.v");
    let mut pf = ok(ProofFile::open(&path, config), "open test.v")?;
    ok(pf.exec_to(pf.steps().len() as i64 - 1), "exec")?;
    Ok((dir, path, pf))
}

fn proof_repair() -> Outcome {
    let (config, server) = match live_server() {
        Some(c) => (c, "live server from COQNAV_LIVE_SERVER"),
        None => (common::config(), "simulator; set COQNAV_LIVE_SERVER for coq-lsp"),
    };
    let start = Instant::now();
    let (_d, path, mut pf) = sample_file(&config)?;
    let bad = [ProofChange::Pop, ProofChange::append(" reflexivity."), ProofChange::append("\nQed.")];
    match pf.change_proof("rev_append", &bad) {
        Err(Error::InvalidChange { .. }) => {}
        other => return Err(format!("incorrect attempt gave {other:?}")),
    }
    ensure!(ok(std::fs::read_to_string(&path), "read")? == common::sample(), "file changed after invalid attempt");
    let good = [
        ProofChange::Pop,
        ProofChange::append(" rewrite app_assoc."),
        ProofChange::append(" reflexivity."),
        ProofChange::append("\nQed."),
    ];
    ok(pf.change_proof("rev_append", &good), "correct attempt")?;
    ensure!(pf.file().errors().count() == 0, "errors after commit: {:?}", pf.diagnostics());
    let status = pf.proof("rev_append").map(|p| p.status);
    ensure!(status == Some(ProofStatus::Closed), "status {status:?}");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("{secs:.2}s, {server}"))
}

fn dataset_shape() -> Outcome {
    let ws = common::workspace(&[("test.v", &common::sample())]);
    let out = ok(tempfile::tempdir(), "tempdir")?;
    ok(extract(&ExtractOptions::new(ws.path(), out.path(), common::config())), "extract")?;
    let doc: Value = ok(serde_json::from_str(&ok(std::fs::read_to_string(out.path().join("test.v.json")), "read")?), "json")?;
    let proofs = doc["proofs"].as_array().cloned().unwrap_or_default();
    ensure!(proofs.len() == 1, "{} proofs", proofs.len());
    let steps = proofs[0]["steps"].as_array().cloned().unwrap_or_default();
    ensure!(!steps.is_empty(), "no steps");
    for s in &steps {
        ensure!(s["text"].as_str().is_some_and(|t| !t.trim().is_empty()), "empty step text");
        ok(serde_json::from_value::<GoalAnswer>(s["goals"].clone()), "goals")?;
        ensure!(s["context"].is_array(), "step without context");
    }
    let rw = steps.iter().find(|s| s["text"].as_str().unwrap_or("").trim() == "rewrite app_nil_r.");
    let names: Vec<&str> = rw
        .and_then(|s| s["context"].as_array())
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    ensure!(names.contains(&"app_nil_r"), "rewrite context {names:?}");
    // where the statement premises come from
    let (_d, _p, pf) = sample_file(&common::config())?;
    let from_list = pf.proofs()[0]
        .statement_context
        .iter()
        .filter(|t| t.library.as_deref() == Some("Coq.Lists.List"))
        .count();
    ensure!(from_list > 0, "no statement premise from List");
    Ok(format!("{} steps, {from_list} statement premises from Coq.Lists.List", steps.len()))
}

const MODULES: &str = "Module A.\n  Definition f := O.\n  Module B.\n    Definition g := O.\n  End B.\nEnd A.\n";

fn feature_checklist() -> Outcome {
    let config = common::config();
    let mut checks: Vec<(&str, Result<(), String>)> = vec![];
    let mut run = |name, f: &mut dyn FnMut() -> Result<(), String>| checks.push((name, f()));

    run("proof state", &mut || {
        let (_d, _p, mut pf) = sample_file(&config)?;
        ok(pf.exec_to(2), "exec")?;
        let g = ok(pf.current_goals(), "goals")?;
        ensure!(g.goals.len() == 1, "{} goals", g.goals.len());
        ensure!(g.goals[0].conclusion.contains("rev (l1 ++ l2)"), "conclusion {}", g.goals[0].conclusion);
        Ok(())
    });
    run("file validity", &mut || {
        let dir = common::workspace(&[("a.v", "Definition a := O.\n"), ("b.v", "Definition b := nope.\n")]);
        let a = ok(CoqFile::open(dir.path().join("a.v"), &config), "open")?;
        let b = ok(CoqFile::open(dir.path().join("b.v"), &config), "open")?;
        ensure!(a.is_valid() && !b.is_valid(), "validity wrong");
        Ok(())
    });
    run("execute steps", &mut || {
        let (_d, _p, mut pf) = sample_file(&config)?;
        ok(pf.exec_to(-1), "rewind")?;
        let fwd = ok(pf.exec(4), "exec")?;
        ensure!(fwd.len() == 4 && pf.pointer() == 3, "pointer {}", pf.pointer());
        ok(pf.exec(-2), "back")?;
        ensure!(pf.pointer() == 1, "pointer {}", pf.pointer());
        Ok(())
    });
    run("modify steps", &mut || {
        let (_d, path, mut pf) = sample_file(&config)?;
        ok(pf.add_step(0, "\nDefinition extra := O."), "add")?;
        ok(pf.delete_step(1), "delete")?;
        ok(pf.add_step(6, " idtac."), "add in proof")?;
        let mut again = ok(ProofFile::open(&path, &config), "reopen")?;
        ok(again.exec_to(pf.pointer()), "exec")?;
        ensure!(again.snapshot() == pf.snapshot(), "reopen differs");
        Ok(())
    });
    run("step context", &mut || {
        let (_d, _p, pf) = sample_file(&config)?;
        let p = &pf.proofs()[0];
        let rw = p.steps.iter().find(|s| s.step.text.trim() == "rewrite app_nil_r.").ok_or("no rewrite step")?;
        let names: Vec<&str> = rw.context.iter().map(|t| t.name.as_str()).collect();
        ensure!(names == ["app_nil_r"], "{names:?}");
        Ok(())
    });
    run("modules", &mut || {
        let dir = common::workspace(&[("m.v", MODULES)]);
        let mut f = ok(CoqFile::open(dir.path().join("m.v"), &config), "open")?;
        ok(f.exec(3), "exec")?;
        ensure!(f.context().module_path() == ["A", "B"], "{:?}", f.context().module_path());
        ok(f.exec_to(f.steps().len() as i64 - 1), "exec")?;
        ensure!(f.context().lookup("A.B.g").is_some(), "A.B.g missing");
        Ok(())
    });
    run("terms", &mut || {
        let (_d, _p, pf) = sample_file(&config)?;
        let t = pf.context().lookup("rev_append").ok_or("rev_append missing")?;
        ensure!(t.term_type == TermType::Lemma, "{:?}", t.term_type);
        ensure!(pf.context().lookup("app_nil_r").is_some(), "library term missing");
        Ok(())
    });
    run("proofs", &mut || {
        let (_d, _p, mut pf) = sample_file(&config)?;
        ensure!(pf.proofs().len() == 1 && pf.unproven_proofs().len() == 1, "bookkeeping");
        ok(pf.exec_to(5), "rewind")?;
        ensure!(pf.open_proofs().len() == 1, "{} open", pf.open_proofs().len());
        Ok(())
    });

    let failed: Vec<String> =
        checks.iter().filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}"))).collect();
    ensure!(failed.is_empty(), "{}", failed.join("; "));
    Ok(format!("{}/8 features", checks.len()))
}

fn qed_first() -> Outcome {
    let text = "Lemma t : True.\nProof.";
    let dir = common::workspace(&[("q.v", text), ("r.v", text)]);
    let mut f = ok(CoqFile::open(dir.path().join("q.v"), &common::config()), "open")?;
    ok(f.change_steps(&[Change::add(1, "\nQed."), Change::add(1, " exact I.")]), "transaction")?;
    ensure!(f.is_valid(), "invalid after transaction");
    let mut g = ok(CoqFile::open(dir.path().join("r.v"), &common::config()), "open")?;
    let first = g.add_step(1, "\nQed.");
    ensure!(matches!(first, Err(Error::InvalidChange { .. })), "sequential Qed gave {first:?}");
    ok(g.add_step(1, " exact I."), "second add")?;
    ensure!(g.text() != f.text(), "sequential path reached the same text");
    Ok("transaction commits, sequential adds fail".into())
}

const POOL: &[&str] = &[
    "\nDefinition extra{n} := O.",
    "\n(* note {n} *)",
    "\nDefinition also{n} := S O.",
    "\n(* another note {n} *)",
    "\nLemma extra{n} : True.\nProof. exact I. Qed.",
    "\nDefinition bad{n} := undefined_thing.",
    "\nfoo bar.",
    " reflexivity.",
    "\nQed.",
    " idtac.",
];

fn transactionality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let config = common::config();
    let (mut valid, mut invalid) = (0, 0);
    for file in 0..10u64 {
        let g = common::gen::file(300 + file, rng.gen_range(12..40));
        let dir = common::workspace(&[("t.v", &g.text)]);
        let path = dir.path().join("t.v");
        let mut pf = ok(ProofFile::open(&path, &config), "open")?;
        for t in 0..10 {
            let n = pf.steps().len() as i64;
            if n > 0 {
                ok(pf.exec_to(rng.gen_range(-1..n)), "position")?;
            }
            let mut pieces = n;
            let mut changes = vec![];
            for _ in 0..rng.gen_range(1..=3) {
                if pieces > 0 && rng.gen_bool(0.25) {
                    changes.push(Change::delete(rng.gen_range(0..pieces)));
                    pieces -= 1;
                } else {
                    let text = POOL[rng.gen_range(0..POOL.len())].replace("{n}", &format!("{file}_{t}_{}", changes.len()));
                    changes.push(Change::add(rng.gen_range(-1..pieces), text));
                    pieces += 1;
                }
            }
            let before = pf.snapshot();
            let disk = ok(std::fs::read(&path), "read")?;
            match pf.change_steps(&changes) {
                Ok(()) => {
                    valid += 1;
                    let mut again = ok(ProofFile::open(&path, &config), "reopen")?;
                    ok(again.exec_to(pf.pointer()), "reopen exec")?;
                    ensure!(again.snapshot() == pf.snapshot(), "file {file} txn {t}: reopen differs for {changes:?}");
                }
                Err(_) => {
                    invalid += 1;
                    ensure!(pf.snapshot() == before, "file {file} txn {t}: state changed by failed {changes:?}");
                    ensure!(ok(std::fs::read(&path), "read")? == disk, "file {file} txn {t}: bytes changed");
                }
            }
        }
    }
    ensure!(valid > 0 && invalid > 0, "no mix: {valid} valid, {invalid} invalid");
    Ok(format!("100/100 ({valid} committed, {invalid} rejected)"))
}

fn exec_round_trip() -> Outcome {
    let mut total = 0;
    for file in 0..20u64 {
        let n = 10 + (file as usize * 7) % 25;
        let g = common::gen::file(500 + file, n);
        let dir = common::workspace(&[("r.v", &g.text)]);
        let mut pf = ok(ProofFile::open(dir.path().join("r.v"), &common::config()), "open")?;
        for k in 0..=n as i64 {
            let before = pf.snapshot();
            ok(pf.exec(k), "forward")?;
            ok(pf.exec(-k), "backward")?;
            ensure!(pf.snapshot() == before, "file {file}, k = {k}");
            total += 1;
        }
    }
    Ok(format!("20 files, {total} prefixes"))
}

fn fixtures_dir(name: &str) -> PathBuf {
    common::fixtures().join(name)
}

fn documents(dir: &Path) -> Result<Vec<(String, String)>, String> {
    let mut out = vec![];
    for e in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let e = ok(e, "walk")?;
        let rel = e.path().strip_prefix(dir).unwrap().to_string_lossy().to_string();
        if e.file_type().is_file() && rel != SUMMARY_FILE {
            out.push((rel, ok(std::fs::read_to_string(e.path()), "read")?));
        }
    }
    Ok(out)
}

fn mock_equivalence() -> Outcome {
    let golden = documents(&fixtures_dir("golden"))?;
    ensure!(!golden.is_empty(), "no goldens");
    let out = ok(tempfile::tempdir(), "tempdir")?;
    let mut o = ExtractOptions::new(fixtures_dir("corpus"), out.path(), common::config());
    o.mock = Some(MockMode::Replay(fixtures_dir("mock/coq-sim-lsp-0.1.0")));
    o.mock_command = vec![env!("CARGO_BIN_EXE_coqnav").to_string()];
    let s = ok(extract(&o), "extract")?;
    ensure!(s.counts.failed == 0 && s.counts.timeout == 0, "replay failures: {:?}", s.files);
    ensure!(documents(out.path())? == golden, "replayed output differs from goldens");
    Ok(format!("{} documents byte-identical", golden.len()))
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn performance() -> Outcome {
    let sizes = common::gen::sizes(42, 30, 10, 500);
    let files: Vec<(String, String)> =
        sizes.iter().enumerate().map(|(i, &n)| (format!("p{i:02}.v"), common::gen::file(700 + i as u64, n).text)).collect();
    let refs: Vec<(&str, &str)> = files.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let ws = common::workspace(&refs);
    let out = ok(tempfile::tempdir(), "tempdir")?;
    let s = ok(extract(&ExtractOptions::new(ws.path(), out.path(), common::config())), "extract")?;
    ensure!(s.counts.ok == 30, "{} of 30 extracted", s.counts.ok);
    let steps: Vec<f64> = s.files.iter().map(|f| f.step_count as f64).collect();
    let secs: Vec<f64> = s.files.iter().map(|f| f.seconds).collect();
    let r = pearson(&steps, &secs);
    ensure!(r > 0.5, "r = {r:.3}");
    Ok(format!("r = {r:.3} over 30 files of 10-500 steps"))
}

fn main() {
    let criteria: &[(&str, fn() -> Outcome)] = &[
        ("proof repair end to end", proof_repair),
        ("dataset shape", dataset_shape),
        ("feature checklist", feature_checklist),
        ("qed-first transaction", qed_first),
        ("transactionality over random edits", transactionality),
        ("exec round trip", exec_round_trip),
        ("mock replay matches goldens", mock_equivalence),
        ("step count predicts execution time", performance),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({detail}) [{secs:.1}s]"),
            Err(why) => {
                failures += 1;
                println!("FAIL {name}: {why} [{secs:.1}s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
