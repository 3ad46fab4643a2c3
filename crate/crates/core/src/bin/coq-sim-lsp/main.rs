//! A small stand-in for coq-lsp that speaks the same protocol over stdio.
//!
//! It checks a subset of the Coq vernacular with an untyped toy kernel:
//! enough to drive proofs over inductive types, notations, modules and
//! sections. Installed libraries come from `--coqlib DIR/theories`, project
//! libraries from `_CoqProject` bindings and `.vo` files written by
//! `coq/saveVo`.

mod check;
mod kernel;
mod loader;
mod segment;
mod term;
mod vernac;

use std::collections::HashMap;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;
use coqnav::lsp::LineIndex;
use coqnav::rpc::{frame_message, FrameReader, ResponseError, RpcMessage};
use serde_json::{json, Value};

use check::SentenceOut;
use loader::{FsLoader, VoFile};

#[derive(Parser)]
#[command(name = "coq-sim-lsp", about = "Toy Coq language server for tests and demos")]
struct Args {
    /// Installed library root; sources are read from `DIR/theories`.
    #[arg(long)]
    coqlib: Option<PathBuf>,
    /// Do not load `Coq.Init.Prelude` into every document.
    #[arg(long)]
    noinit: bool,
    /// Artificial checking cost per sentence, in microseconds.
    #[arg(long, default_value_t = 0)]
    step_cost_us: u64,
}

struct Doc {
    version: i64,
    text: String,
    index: LineIndex,
    out: Vec<SentenceOut>,
}

struct Server {
    args: Args,
    root: Option<PathBuf>,
    loader: Option<FsLoader>,
    docs: HashMap<String, Doc>,
    out: std::io::Stdout,
}

fn uri_path(uri: &str) -> Option<PathBuf> {
    url::Url::parse(uri).ok()?.to_file_path().ok()
}

const NOT_FOUND: i64 = -32601;
const INVALID: i64 = -32602;
const FAILED: i64 = -32803;

fn err(code: i64, message: impl Into<String>) -> ResponseError {
    ResponseError { code, message: message.into(), data: None }
}

impl Server {
    fn send(&mut self, msg: RpcMessage) {
        let bytes = frame_message(&msg.to_json());
        let mut lock = self.out.lock();
        let _ = lock.write_all(&bytes);
        let _ = lock.flush();
    }

    fn loader(&mut self) -> &FsLoader {
        if self.loader.is_none() {
            self.loader = Some(FsLoader::new(self.args.coqlib.as_deref(), self.root.as_deref(), self.args.noinit));
        }
        self.loader.as_ref().unwrap()
    }

    fn check_doc(&mut self, uri: &str, version: i64, text: String) {
        let path = uri_path(uri);
        let cost = Duration::from_micros(self.args.step_cost_us);
        let loader = self.loader();
        loader.set_current(path.clone());
        let stack: Vec<String> = path.as_deref().and_then(|p| loader.logical_of(p)).into_iter().collect();
        let (_, out) = check::check(&text, loader, &stack, cost);
        loader.set_current(None);
        let index = LineIndex::new(&text);
        let diagnostics: Vec<Value> = out
            .iter()
            .filter_map(|s| {
                s.error.as_ref().map(|m| {
                    json!({
                        "range": {"start": index.position(s.start), "end": index.position(s.end)},
                        "severity": 1,
                        "message": m,
                    })
                })
            })
            .collect();
        self.send(RpcMessage::notification(
            "$/coq/fileProgress",
            json!({"textDocument": {"uri": uri, "version": version}, "processing": []}),
        ));
        self.send(RpcMessage::notification(
            "textDocument/publishDiagnostics",
            json!({"uri": uri, "version": version, "diagnostics": diagnostics}),
        ));
        self.docs.insert(uri.to_string(), Doc { version, text, index, out });
    }

    fn doc<'a>(&self, params: &'a Value) -> Result<(&'a str, &Doc), ResponseError> {
        let uri = params["textDocument"]["uri"].as_str().ok_or_else(|| err(INVALID, "missing textDocument.uri"))?;
        let doc = self.docs.get(uri).ok_or_else(|| err(INVALID, format!("document {uri} is not open")))?;
        Ok((uri, doc))
    }

    fn goals(&self, params: &Value) -> Result<Value, ResponseError> {
        let (uri, doc) = self.doc(params)?;
        let pos: coqnav::lsp::Position = serde_json::from_value(params["position"].clone())
            .map_err(|e| err(INVALID, format!("bad position: {e}")))?;
        let off = doc.index.offset(pos).ok_or_else(|| err(INVALID, "position outside the document"))?;
        let after = params["mode"].as_str() == Some("After");
        let prev = doc.out.iter().rposition(|s| s.end <= off);
        let idx = if after { doc.out.iter().position(|s| s.start <= off && off <= s.end).or(prev) } else { prev };
        let goals = idx.map(|i| doc.out[i].goals.clone()).unwrap_or(Value::Null);
        Ok(json!({
            "textDocument": {"uri": uri, "version": doc.version},
            "position": pos,
            "goals": goals,
            "messages": [],
        }))
    }

    fn document(&self, params: &Value) -> Result<Value, ResponseError> {
        let (_, doc) = self.doc(params)?;
        let spans: Vec<Value> = doc
            .out
            .iter()
            .map(|s| {
                json!({
                    "range": {"start": doc.index.position(s.start), "end": doc.index.position(s.end)},
                    "span": s.ast,
                })
            })
            .collect();
        Ok(json!({
            "spans": spans,
            "completed": {
                "status": ["Yes"],
                "range": {"start": {"line": 0, "character": 0}, "end": doc.index.end_position()},
            },
        }))
    }

    fn save_vo(&self, params: &Value) -> Result<Value, ResponseError> {
        let (uri, doc) = self.doc(params)?;
        let path = uri_path(uri).ok_or_else(|| err(INVALID, format!("{uri} is not a file URI")))?;
        let vo = VoFile { sim_vo: 1, source: doc.text.clone() };
        let body = serde_json::to_string(&vo).expect("serializable");
        std::fs::write(path.with_extension("vo"), body)
            .map_err(|e| err(FAILED, format!("cannot write {}: {e}", path.with_extension("vo").display())))?;
        Ok(Value::Null)
    }

    fn request(&mut self, method: &str, params: &Value) -> Result<Value, ResponseError> {
        match method {
            "initialize" => {
                self.root = params["rootUri"].as_str().and_then(uri_path);
                self.loader = None;
                Ok(json!({
                    "capabilities": {"textDocumentSync": 1},
                    "serverInfo": {"name": "coq-sim-lsp", "version": env!("CARGO_PKG_VERSION")},
                }))
            }
            "shutdown" => Ok(Value::Null),
            "proof/goals" => self.goals(params),
            "coq/getDocument" => self.document(params),
            "coq/saveVo" => self.save_vo(params),
            _ => Err(err(NOT_FOUND, format!("Method not found: {method}"))),
        }
    }

    fn notification(&mut self, method: &str, params: Value) -> bool {
        match method {
            "exit" => return false,
            "textDocument/didOpen" => {
                let td = &params["textDocument"];
                if let (Some(uri), Some(text)) = (td["uri"].as_str(), td["text"].as_str()) {
                    self.check_doc(uri, td["version"].as_i64().unwrap_or(0), text.to_string());
                }
            }
            "textDocument/didChange" => {
                let td = &params["textDocument"];
                let text = params["contentChanges"].as_array().and_then(|c| c.last()).and_then(|c| c["text"].as_str());
                if let (Some(uri), Some(text)) = (td["uri"].as_str(), text) {
                    self.check_doc(uri, td["version"].as_i64().unwrap_or(0), text.to_string());
                }
            }
            "textDocument/didClose" => {
                if let Some(uri) = params["textDocument"]["uri"].as_str() {
                    self.docs.remove(uri);
                }
            }
            _ => {}
        }
        true
    }
}

fn main() {
    let args = Args::parse();
    let mut server = Server { args, root: None, loader: None, docs: HashMap::new(), out: std::io::stdout() };
    let mut reader = FrameReader::new(BufReader::new(std::io::stdin()));
    loop {
        let body = match reader.read_body() {
            Ok(Some(b)) => b,
            Ok(None) => break,
            Err(e) => {
                eprintln!("coq-sim-lsp: {e}");
                break;
            }
        };
        let msg = match RpcMessage::parse(&body) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("coq-sim-lsp: dropping message: {e}");
                continue;
            }
        };
        match msg {
            RpcMessage::Request { id, method, params } => {
                let outcome = server.request(&method, &params);
                server.send(RpcMessage::Response { id, outcome });
            }
            RpcMessage::Notification { method, params } => {
                if !server.notification(&method, params) {
                    break;
                }
            }
            RpcMessage::Response { .. } => {}
        }
    }
}
