//! Dataset extraction: every proof of every file, with per-step goals and
//! premise names, one JSON document per source file.

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Config;
use crate::lsp::Session;
use crate::{CoqFile, Error, ProofFile, ProofTerm, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";
pub const DEFAULT_GLOB: &str = "**/*.v";

/// Where the server comes from when not run directly.
#[derive(Debug, Clone, PartialEq)]
pub enum MockMode {
    /// Replay `<dir>/<rel>.json` for each file.
    Replay(PathBuf),
    /// Run the real server behind a recorder writing `<dir>/<rel>.json`.
    Record(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub workspace: PathBuf,
    pub output: PathBuf,
    /// Matched against paths relative to the workspace.
    pub globs: Vec<String>,
    /// Per-file wall-clock limit. Defaults to `config.timeouts.file`.
    pub timeout: Option<Duration>,
    pub jobs: usize,
    pub config: Config,
    pub mock: Option<MockMode>,
    /// How to invoke this program's `mock` subcommands.
    pub mock_command: Vec<String>,
}

impl ExtractOptions {
    pub fn new(workspace: impl Into<PathBuf>, output: impl Into<PathBuf>, config: Config) -> Self {
        ExtractOptions {
            workspace: workspace.into(),
            output: output.into(),
            globs: vec![],
            timeout: None,
            jobs: 1,
            config,
            mock: None,
            mock_command: vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileStatus {
    Ok,
    /// Coq reported errors; the file is skipped.
    CoqErrors,
    Timeout,
    /// Anything else: no server, protocol trouble, I/O.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileSummary {
    pub file: String,
    pub status: FileStatus,
    pub step_count: usize,
    pub proof_count: usize,
    pub proof_step_count: usize,
    /// Open, harvest and parse.
    pub open_seconds: f64,
    /// Running every step.
    pub exec_seconds: f64,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub files: usize,
    pub ok: usize,
    pub coq_errors: usize,
    pub timeout: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub counts: Counts,
    pub files: Vec<FileSummary>,
}

impl Summary {
    fn new(mut files: Vec<FileSummary>) -> Self {
        files.sort_by(|a, b| a.file.cmp(&b.file));
        let mut counts = Counts { files: files.len(), ..Counts::default() };
        for f in &files {
            match f.status {
                FileStatus::Ok => counts.ok += 1,
                FileStatus::CoqErrors => counts.coq_errors += 1,
                FileStatus::Timeout => counts.timeout += 1,
                FileStatus::Failed => counts.failed += 1,
            }
        }
        Summary { schema_version: SCHEMA_VERSION, counts, files }
    }
}

/// Serialized form of one proof.
pub fn proof_record(file: &str, proof: &ProofTerm) -> Value {
    let names = |terms: &[crate::context::Term]| terms.iter().map(|t| t.name.clone()).collect::<Vec<_>>();
    json!({
        "file": file,
        "name": proof.name(),
        "statement": proof.term.step.text.trim(),
        "statement_context": names(&proof.statement_context),
        "status": proof.status,
        "steps": proof.steps.iter().map(|s| json!({
            "text": s.step.text,
            "ast": s.step.ast,
            "goals": s.goals,
            "context": names(&s.context),
        })).collect::<Vec<_>>(),
    })
}

/// The per-file document.
pub fn file_record(file: &str, step_count: usize, proofs: &[ProofTerm]) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "file": file,
        "step_count": step_count,
        "proofs": proofs.iter().map(|p| proof_record(file, p)).collect::<Vec<_>>(),
    })
}

pub fn to_pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn glob_set(globs: &[String]) -> Result<GlobSet> {
    let mut b = GlobSetBuilder::new();
    let defaults = [DEFAULT_GLOB.to_string()];
    for g in if globs.is_empty() { &defaults[..] } else { globs } {
        b.add(Glob::new(g).map_err(|e| Error::Config(format!("bad glob {g:?}: {e}")))?);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

fn rel_name(path: &Path) -> String {
    path.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Source files under `workspace` matching `globs`, as relative paths in
/// sorted order.
pub fn discover(workspace: &Path, globs: &[String], skip: Option<&Path>) -> Result<Vec<PathBuf>> {
    let set = glob_set(globs)?;
    let mut out = vec![];
    let walker = walkdir::WalkDir::new(workspace).sort_by_file_name().into_iter().filter_entry(|e| {
        let hidden = e.depth() > 0 && e.file_name().to_string_lossy().starts_with('.');
        let skipped = skip.is_some_and(|s| e.path() == s);
        !hidden && !skipped
    });
    for entry in walker {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(workspace).expect("under workspace").to_path_buf();
        if set.is_match(&rel) {
            out.push(rel);
        }
    }
    Ok(out)
}

/// Server command for one file, wrapped by the mock subcommands if asked.
fn command_for(opts: &ExtractOptions, rel: &Path) -> Result<Vec<String>> {
    let server = opts.config.server.resolved_command();
    let Some(mode) = &opts.mock else { return Ok(server) };
    if opts.mock_command.is_empty() {
        return Err(Error::Config("mock mode needs the mock command".into()));
    }
    let mut subst = vec![];
    let ws = &opts.config.workspace;
    for (i, b) in ws.library_roots.iter().enumerate() {
        subst.push("--subst".to_string());
        subst.push(format!("lib{i}={}", std::path::absolute(&b.dir)?.display()));
    }
    for (i, b) in ws.bindings.iter().enumerate() {
        subst.push("--subst".to_string());
        subst.push(format!("bind{i}={}", std::path::absolute(opts.workspace.join(&b.dir))?.display()));
    }
    let fixture = |dir: &Path| -> Result<String> {
        let mut name = rel.as_os_str().to_owned();
        name.push(".json");
        Ok(std::path::absolute(dir.join(name))?.display().to_string())
    };
    let mut cmd = opts.mock_command.clone();
    match mode {
        MockMode::Replay(dir) => {
            cmd.extend(["mock".to_string(), "replay".to_string(), fixture(dir)?]);
            cmd.extend(subst);
        }
        MockMode::Record(dir) => {
            let f = fixture(dir)?;
            if let Some(parent) = Path::new(&f).parent() {
                std::fs::create_dir_all(parent)?;
            }
            cmd.extend(["mock".to_string(), "record".to_string(), "--output".to_string(), f]);
            cmd.extend(subst);
            cmd.push("--".to_string());
            cmd.extend(server);
        }
    }
    Ok(cmd)
}

struct Extracted {
    summary: FileSummary,
    record: Option<Value>,
}

fn extract_with(session: Arc<Session>, path: &Path, rel: &str, config: &Config) -> Result<Extracted> {
    let t0 = Instant::now();
    let mut pf = ProofFile::from_file(CoqFile::open_in(session, path, config)?)?;
    let open_seconds = t0.elapsed().as_secs_f64();
    let mut summary = FileSummary {
        file: rel.to_string(),
        status: FileStatus::Ok,
        step_count: pf.steps().len(),
        proof_count: 0,
        proof_step_count: 0,
        open_seconds,
        exec_seconds: 0.0,
        seconds: 0.0,
        errors: vec![],
    };
    if !pf.is_valid() {
        summary.status = FileStatus::CoqErrors;
        summary.errors = pf.file().errors().map(|d| d.message.clone()).collect();
        return Ok(Extracted { summary, record: None });
    }
    let t1 = Instant::now();
    pf.exec_to(pf.steps().len() as i64 - 1)?;
    summary.exec_seconds = t1.elapsed().as_secs_f64();
    summary.proof_count = pf.proofs().len();
    summary.proof_step_count = pf.proofs().iter().map(|p| p.steps.len()).sum();
    let record = file_record(rel, pf.steps().len(), pf.proofs());
    Ok(Extracted { summary, record: Some(record) })
}

fn failed(rel: &str, status: FileStatus, error: String) -> Extracted {
    Extracted {
        summary: FileSummary {
            file: rel.to_string(),
            status,
            step_count: 0,
            proof_count: 0,
            proof_step_count: 0,
            open_seconds: 0.0,
            exec_seconds: 0.0,
            seconds: 0.0,
            errors: vec![error],
        },
        record: None,
    }
}

/// One file on its own session, bounded by `timeout`.
fn extract_file(opts: &ExtractOptions, rel: &Path, timeout: Duration) -> Extracted {
    let name = rel_name(rel);
    let start = Instant::now();
    let mut config = opts.config.clone();
    if opts.mock.is_some() {
        // a cache hit would skip recorded traffic
        config.workspace.cache_dir = None;
    }
    config.server.command = match command_for(opts, rel) {
        Ok(c) => c,
        Err(e) => return failed(&name, FileStatus::Failed, e.to_string()),
    };
    let root = opts.workspace.clone();
    let path = opts.workspace.join(rel);
    let (session_tx, session_rx) = mpsc::channel();
    let (done_tx, done_rx) = mpsc::channel();
    let worker_name = name.clone();
    thread::spawn(move || {
        let session = match Session::start(&config, &root) {
            Ok(s) => Arc::new(s),
            Err(e) => {
                let _ = done_tx.send(Err(e));
                return;
            }
        };
        let _ = session_tx.send(session.clone());
        let _ = done_tx.send(extract_with(session, &path, &worker_name, &config));
    });
    let outcome = done_rx.recv_timeout(timeout);
    let session = session_rx.try_recv().ok();
    let mut out = match outcome {
        Ok(Ok(x)) => x,
        Ok(Err(e)) => failed(&name, FileStatus::Failed, e.to_string()),
        Err(_) => {
            if let Some(s) = &session {
                s.kill();
            }
            failed(&name, FileStatus::Timeout, format!("no result after {:.1}s", timeout.as_secs_f64()))
        }
    };
    drop(session);
    out.summary.seconds = start.elapsed().as_secs_f64();
    out
}

/// Run the extractor. Per-file problems end up in the summary; only
/// trouble with the workspace or the output directory is an error.
pub fn extract(opts: &ExtractOptions) -> Result<Summary> {
    let workspace = std::path::absolute(&opts.workspace)?;
    let output = std::path::absolute(&opts.output)?;
    let opts = ExtractOptions { workspace: workspace.clone(), output: output.clone(), ..opts.clone() };
    let files = discover(&workspace, &opts.globs, Some(&output))?;
    std::fs::create_dir_all(&output)?;
    let timeout = opts.timeout.unwrap_or_else(|| opts.config.timeouts.file());
    let queue = Mutex::new(files.iter());
    let results = Mutex::new(vec![]);
    thread::scope(|scope| {
        for _ in 0..opts.jobs.max(1).min(files.len().max(1)) {
            scope.spawn(|| loop {
                let Some(rel) = queue.lock().unwrap().next() else { break };
                log::info!("extracting {}", rel.display());
                let x = extract_file(&opts, rel, timeout);
                results.lock().unwrap().push((rel.clone(), x));
            });
        }
    });
    let mut summaries = vec![];
    for (rel, x) in results.into_inner().unwrap() {
        let mut name = rel.into_os_string();
        name.push(".json");
        let target = output.join(name);
        if let Some(record) = &x.record {
            if let Some(parent) = target.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&target, to_pretty(record))?;
        } else if target.exists() {
            // stale output from an earlier run
            std::fs::remove_file(&target)?;
        }
        summaries.push(x.summary);
    }
    let summary = Summary::new(summaries);
    std::fs::write(output.join(SUMMARY_FILE), to_pretty(&serde_json::to_value(&summary)?))?;
    Ok(summary)
}
