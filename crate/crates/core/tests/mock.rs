mod common;

use std::path::Path;
use std::sync::mpsc;
use std::time::Duration;

use coqnav::config::Config;
use coqnav::lsp::Session;
use coqnav::mock::{digest, replay, Entry, Fixture, Metadata, MockError, Substitutions, UNMATCHED_CODE};
use coqnav::rpc::{frame_message, parse_frames, RpcError, RpcMessage, Transport};
use coqnav::ProofFile;
use serde_json::{json, Value};

fn coqnav() -> String {
    env!("CARGO_BIN_EXE_coqnav").to_string()
}

fn lib_subst() -> String {
    format!("lib0={}", common::coqlib().join("theories").display())
}

fn recording(config: &Config, out: &Path) -> Config {
    let mut cmd = vec![coqnav(), "mock".into(), "record".into(), "--output".into(), out.display().to_string()];
    cmd.extend(["--subst".into(), lib_subst(), "--".into()]);
    cmd.extend(config.server.command.clone());
    config.clone().with_command(cmd)
}

fn replaying(config: &Config, fixture: &Path) -> Config {
    config.clone().with_command([
        coqnav(),
        "mock".into(),
        "replay".into(),
        fixture.display().to_string(),
        "--subst".into(),
        lib_subst(),
    ])
}

fn entry(method: &str, params: &Value, respond: Option<Value>) -> Entry {
    let mut e = Entry::new(method, digest(method, params, &Substitutions::new()));
    e.respond = respond;
    e
}

fn metadata() -> Metadata {
    Metadata { format: 1, server_name: Some("handmade".into()), server_version: None, coq_version: None }
}

fn write_fixture(dir: &Path, f: &Fixture) -> std::path::PathBuf {
    let p = dir.join("fixture.json");
    std::fs::write(&p, f.to_pretty()).unwrap();
    p
}

#[test]
fn empty_fixture_rejects_everything() {
    let f = Fixture { metadata: metadata(), entries: vec![] };
    let input = frame_message(&RpcMessage::request(1, "initialize", json!({})).to_json());
    let mut out = vec![];
    let err = replay(&f, Substitutions::new(), &input[..], &mut out).unwrap_err();
    assert!(matches!(err, MockError::Unmatched { ref method, .. } if method == "initialize"));
    let frames = parse_frames(&out).unwrap();
    assert_eq!(frames.len(), 1);
    match RpcMessage::parse(&frames[0]).unwrap() {
        RpcMessage::Response { outcome: Err(e), .. } => assert_eq!(e.code, UNMATCHED_CODE),
        other => panic!("{other:?}"),
    }
}

#[test]
fn exhausted_entries_are_reported() {
    let params = json!({"x": 1});
    let f = Fixture { metadata: metadata(), entries: vec![entry("ping", &params, Some(json!("pong")))] };
    let mut input = frame_message(&RpcMessage::request(1, "ping", params.clone()).to_json());
    input.extend(frame_message(&RpcMessage::request(2, "ping", params).to_json()));
    let mut out = vec![];
    let err = replay(&f, Substitutions::new(), &input[..], &mut out).unwrap_err();
    assert!(matches!(err, MockError::Exhausted { .. }));
    assert_eq!(parse_frames(&out).unwrap().len(), 2);
}

#[test]
fn digest_ignores_versions_key_order_and_paths() {
    let mut subs = Substitutions::new();
    subs.bind("root", "/home/a/ws");
    let a = json!({"textDocument": {"uri": "file:///home/a/ws/x.v", "version": 3}, "position": {"line": 1, "character": 0}});
    let mut other = Substitutions::new();
    other.bind("root", "/tmp/b");
    let b = json!({"position": {"character": 0, "line": 1}, "textDocument": {"version": 9, "uri": "file:///tmp/b/x.v"}});
    assert_eq!(digest("proof/goals", &a, &subs), digest("proof/goals", &b, &other));
    let c = json!({"position": {"character": 1, "line": 1}, "textDocument": {"version": 9, "uri": "file:///tmp/b/x.v"}});
    assert_ne!(digest("proof/goals", &a, &subs), digest("proof/goals", &c, &other));
    assert_ne!(digest("proof/goals", &a, &subs), digest("coq/getDocument", &a, &subs));
}

#[test]
fn placeholders_round_trip() {
    let mut subs = Substitutions::new();
    subs.bind("root", "/tmp/my ws");
    let v = json!({"uri": "file:///tmp/my%20ws/a.v", "path": "/tmp/my ws/a.v"});
    let abs = subs.abstract_value(&v);
    assert_eq!(abs, json!({"uri": "file://${root}/a.v", "path": "${root}/a.v"}));
    assert_eq!(subs.concrete_value(&abs), v);
}

#[test]
fn deferred_response_is_routed_to_its_caller() {
    let dir = tempfile::tempdir().unwrap();
    let slow = json!({"n": 1});
    let fast = json!({"n": 2});
    let mut deferred = entry("test/slow", &slow, Some(json!("slow answer")));
    deferred.defer = true;
    let f = Fixture {
        metadata: metadata(),
        entries: vec![deferred, entry("test/fast", &fast, Some(json!("fast answer")))],
    };
    let path = write_fixture(dir.path(), &f);
    let t = std::sync::Arc::new(
        Transport::spawn(&[coqnav(), "mock".into(), "replay".into(), path.display().to_string()], None).unwrap(),
    );
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|s| {
        let (t1, tx1) = (t.clone(), tx.clone());
        s.spawn(move || tx1.send(("slow", t1.call("test/slow", slow).unwrap())).unwrap());
        std::thread::sleep(Duration::from_millis(200));
        let (t2, tx2) = (t.clone(), tx);
        s.spawn(move || tx2.send(("fast", t2.call("test/fast", fast).unwrap())).unwrap());
    });
    let got: Vec<(&str, Value)> = rx.iter().collect();
    assert_eq!(got, vec![("fast", json!("fast answer")), ("slow", json!("slow answer"))]);
}

#[test]
fn held_request_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let mut held = entry("test/never", &Value::Null, Some(json!(1)));
    held.hold = true;
    let f = Fixture { metadata: metadata(), entries: vec![held] };
    let path = write_fixture(dir.path(), &f);
    let t = Transport::spawn(&[coqnav(), "mock".into(), "replay".into(), path.display().to_string()], None).unwrap();
    let r = t.call_with_timeout("test/never", Value::Null, Duration::from_millis(300));
    assert!(matches!(r, Err(RpcError::Timeout { .. })));
}

#[test]
fn start_and_shutdown_make_two_requests() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.json");
    let mut s = Session::start(&recording(&common::config(), &out), dir.path()).unwrap();
    s.shutdown().unwrap();
    drop(s);
    let f = Fixture::load(&out).unwrap();
    let methods: Vec<&str> = f.entries.iter().map(|e| e.matcher.method.as_str()).collect();
    assert_eq!(methods, vec!["initialize", "initialized", "shutdown", "exit"]);
    assert_eq!(f.entries.iter().filter(|e| e.respond.is_some() || e.error.is_some()).count(), 2);
    assert_eq!(f.metadata.server_name.as_deref(), Some("coq-sim-lsp"));
}

fn run_sample(config: &Config) -> (Vec<Value>, Vec<String>) {
    let dir = common::workspace(&[("test.v", &common::sample())]);
    let mut pf = ProofFile::open(dir.path().join("test.v"), config).unwrap();
    pf.exec_to(pf.steps().len() as i64 - 1).unwrap();
    let proofs = pf.proofs().iter().map(|p| coqnav::extract::proof_record("test.v", p)).collect();
    let steps = pf.steps().iter().map(|s| s.text.clone()).collect();
    (proofs, steps)
}

#[test]
fn record_replay_rerecord() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    let live = run_sample(&recording(&common::config(), &first));
    let replayed = run_sample(&replaying(&common::config(), &first));
    assert_eq!(live, replayed);
    let rerecorded = run_sample(&recording(&replaying(&common::config(), &first), &second));
    assert_eq!(live, rerecorded);
    let (a, b) = (Fixture::load(&first).unwrap(), Fixture::load(&second).unwrap());
    assert_eq!(a.entries, b.entries);
    let opened = a.entries.iter().find(|e| e.matcher.method == "textDocument/didOpen").unwrap();
    assert!(opened.notify_after.iter().any(|n| n.method == "textDocument/publishDiagnostics"));
    // paths are stored as placeholders
    let text = std::fs::read_to_string(&first).unwrap();
    assert!(text.contains("${root}/test.v"));
    assert!(text.contains("${lib0}/Lists/List.v"));
    assert!(!text.contains(&common::coqlib().display().to_string()));
}

#[test]
fn replay_fails_loudly_on_unrecorded_traffic() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("f.json");
    run_sample(&recording(&common::config(), &fixture));
    let other = common::workspace(&[("test.v", "Definition other := O.\n")]);
    let r = ProofFile::open(other.path().join("test.v"), &replaying(&common::config(), &fixture));
    assert!(r.is_err());
}
