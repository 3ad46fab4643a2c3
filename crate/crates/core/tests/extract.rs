mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use coqnav::extract::{extract, ExtractOptions, FileStatus, MockMode, SUMMARY_FILE};
use coqnav::goals::GoalAnswer;
use coqnav::stats::stats;
use serde_json::Value;

fn corpus() -> PathBuf {
    common::fixtures().join("corpus")
}

fn golden() -> PathBuf {
    common::fixtures().join("golden")
}

fn mock_dir() -> PathBuf {
    common::fixtures().join("mock/coq-sim-lsp-0.1.0")
}

fn options(ws: &Path, out: &Path) -> ExtractOptions {
    let mut o = ExtractOptions::new(ws, out, common::config());
    o.mock_command = vec![env!("CARGO_BIN_EXE_coqnav").to_string()];
    o.jobs = 2;
    o
}

/// Every per-file document under `dir`, by relative path.
fn documents(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for e in walkdir::WalkDir::new(dir) {
        let e = e.unwrap();
        let rel = e.path().strip_prefix(dir).unwrap().to_string_lossy().to_string();
        if e.file_type().is_file() && rel != SUMMARY_FILE {
            out.insert(rel, std::fs::read_to_string(e.path()).unwrap());
        }
    }
    out
}

#[test]
fn sample_dataset() {
    let ws = common::workspace(&[("test.v", &common::sample())]);
    let out = tempfile::tempdir().unwrap();
    let summary = extract(&options(ws.path(), out.path())).unwrap();
    assert_eq!(summary.counts.ok, 1);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("test.v.json")).unwrap()).unwrap();
    let keys: Vec<&String> = doc.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["schema_version", "file", "step_count", "proofs"]);
    let proofs = doc["proofs"].as_array().unwrap();
    assert_eq!(proofs.len(), 1);
    let p = &proofs[0];
    assert_eq!(p["name"], "rev_append");
    assert_eq!(p["status"], "admitted");
    assert_eq!(p["file"], "test.v");
    let steps = p["steps"].as_array().unwrap();
    assert!(steps.len() >= 4);
    for s in steps {
        assert!(!s["text"].as_str().unwrap().trim().is_empty());
        serde_json::from_value::<GoalAnswer>(s["goals"].clone()).unwrap();
        assert!(s["context"].is_array());
        assert!(s.get("ast").is_some());
    }
    let rw = steps.iter().find(|s| s["text"].as_str().unwrap().trim() == "rewrite app_nil_r.").unwrap();
    assert_eq!(rw["context"], serde_json::json!(["app_nil_r"]));
    let st = stats(out.path()).unwrap();
    assert_eq!(st.proofs, 1);
    assert_eq!(st.files[0].steps, 13);
    assert!(st.files[0].seconds.is_some());
}

#[test]
fn empty_workspace() {
    let ws = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let summary = extract(&options(ws.path(), out.path())).unwrap();
    assert_eq!(summary.counts.files, 0);
    assert!(summary.files.is_empty());
    let st = stats(out.path()).unwrap();
    assert_eq!((st.proofs, st.steps, st.files.len()), (0, 0, 0));
    assert_eq!(st.seconds.mean, 0.0);
}

#[test]
fn broken_files_are_skipped() {
    let ws = common::workspace(&[
        ("ok.v", "Lemma t : True.\nProof. exact I. Qed.\n"),
        ("sub/bad.v", "Definition x := nothing_here.\n"),
        ("notes.txt", "not coq"),
    ]);
    let out = tempfile::tempdir().unwrap();
    let summary = extract(&options(ws.path(), out.path())).unwrap();
    let rows: Vec<(&str, FileStatus)> = summary.files.iter().map(|f| (f.file.as_str(), f.status)).collect();
    assert_eq!(rows, vec![("ok.v", FileStatus::Ok), ("sub/bad.v", FileStatus::CoqErrors)]);
    assert!(!summary.files[1].errors.is_empty());
    assert!(out.path().join("ok.v.json").exists());
    assert!(!out.path().join("sub/bad.v.json").exists());
}

#[test]
fn globs_select_files() {
    let ws = common::workspace(&[("a/x.v", "Definition x := O.\n"), ("b/y.v", "Definition y := O.\n")]);
    let out = tempfile::tempdir().unwrap();
    let mut o = options(ws.path(), out.path());
    o.globs = vec!["b/**".into()];
    let summary = extract(&o).unwrap();
    assert_eq!(summary.files.len(), 1);
    assert_eq!(summary.files[0].file, "b/y.v");
}

#[test]
fn slow_files_time_out() {
    let g = common::gen::file(11, 300);
    let ws = common::workspace(&[("big.v", &g.text)]);
    let out = tempfile::tempdir().unwrap();
    let mut o = options(ws.path(), out.path());
    o.timeout = Some(Duration::from_millis(20));
    let summary = extract(&o).unwrap();
    assert_eq!(summary.files[0].status, FileStatus::Timeout);
    assert_eq!(summary.counts.timeout, 1);
}

#[test]
fn missing_server_is_a_failure_not_an_abort() {
    let ws = common::workspace(&[("a.v", "Definition x := O.\n")]);
    let out = tempfile::tempdir().unwrap();
    let mut o = options(ws.path(), out.path());
    o.config = o.config.with_command(["/nonexistent/server"]);
    let summary = extract(&o).unwrap();
    assert_eq!(summary.counts.failed, 1);
}

#[test]
fn median_step_count_matches_generator() {
    let sizes = common::gen::sizes(5, 50, 10, 60);
    let files: Vec<(String, String)> =
        sizes.iter().enumerate().map(|(i, &n)| (format!("f{i:02}.v"), common::gen::file(100 + i as u64, n).text)).collect();
    let refs: Vec<(&str, &str)> = files.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let ws = common::workspace(&refs);
    let out = tempfile::tempdir().unwrap();
    let mut o = options(ws.path(), out.path());
    o.jobs = 4;
    let summary = extract(&o).unwrap();
    assert_eq!(summary.counts.ok, 50);
    let mut sorted = sizes.clone();
    sorted.sort();
    let expected = (sorted[24] + sorted[25]) as f64 / 2.0;
    let st = stats(out.path()).unwrap();
    assert_eq!(st.steps_per_file.median, expected);
    assert_eq!(st.steps, sizes.iter().sum::<usize>());
}

#[test]
fn malformed_dataset() {
    let dir = common::workspace(&[("x.json", "{\"schema_version\": 1}")]);
    assert!(matches!(stats(dir.path()), Err(coqnav::Error::MalformedDataset { .. })));
    let dir = common::workspace(&[("x.json", "not json")]);
    assert!(matches!(stats(dir.path()), Err(coqnav::Error::MalformedDataset { .. })));
}

/// Set `COQNAV_REGENERATE=1` to rewrite the goldens and the mock fixtures
/// from a live run.
#[test]
fn corpus_goldens() {
    if std::env::var_os("COQNAV_REGENERATE").is_some() {
        let _ = std::fs::remove_dir_all(golden());
        let _ = std::fs::remove_dir_all(mock_dir());
        let mut o = options(&corpus(), &golden());
        o.mock = Some(MockMode::Record(mock_dir()));
        extract(&o).unwrap();
        std::fs::remove_file(golden().join(SUMMARY_FILE)).unwrap();
    }
    let expected = documents(&golden());
    assert!(expected.len() >= 3, "goldens missing; regenerate with COQNAV_REGENERATE=1");

    let live = tempfile::tempdir().unwrap();
    let summary = extract(&options(&corpus(), live.path())).unwrap();
    assert_eq!(summary.counts.coq_errors, 1);
    assert_eq!(documents(live.path()), expected);

    for _ in 0..2 {
        let replayed = tempfile::tempdir().unwrap();
        let mut o = options(&corpus(), replayed.path());
        o.mock = Some(MockMode::Replay(mock_dir()));
        let s = extract(&o).unwrap();
        assert_eq!(s.counts.failed, 0, "{:?}", s.files);
        assert_eq!(documents(replayed.path()), expected);
    }
}

#[test]
fn cli_extract_and_stats() {
    let ws = common::workspace(&[("test.v", &common::sample())]);
    let out = tempfile::tempdir().unwrap();
    let cfg = ws.path().join("coqnav.toml");
    let c = common::config();
    let toml = format!(
        "[server]\ncommand = {:?}\n[[workspace.library_roots]]\ndir = {:?}\nprefix = \"Coq\"\n",
        c.server.command,
        c.workspace.library_roots[0].dir.display().to_string()
    );
    std::fs::write(&cfg, toml).unwrap();
    let bin = env!("CARGO_BIN_EXE_coqnav");
    let status = std::process::Command::new(bin)
        .args(["extract", "--workspace"])
        .arg(ws.path())
        .arg("--output")
        .arg(out.path())
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let st = std::process::Command::new(bin).args(["stats", "--dataset"]).arg(out.path()).output().unwrap();
    assert!(st.status.success());
    let text = String::from_utf8(st.stdout).unwrap();
    assert!(text.contains("proofs: 1"), "{text}");

    // a replay with no fixtures fails the file, and the run
    let empty = tempfile::tempdir().unwrap();
    let status = std::process::Command::new(bin)
        .args(["extract", "--workspace"])
        .arg(ws.path())
        .arg("--output")
        .arg(out.path())
        .arg("--config")
        .arg(&cfg)
        .arg("--mock")
        .arg(empty.path())
        .output()
        .unwrap()
        .status;
    assert!(!status.success());
}
