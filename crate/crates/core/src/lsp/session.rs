use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::mpsc::Receiver;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::text::LineIndex;
use super::types::{Diagnostic, Position, RawSpan, Range};
use crate::config::{Config, ExtensionMethods, GoalMode};
use crate::goals::GoalAnswer;
use crate::rpc::{RpcError, RpcMessage, Transport};
use crate::{Error, Result};

const LANGUAGE_ID: &str = "coq";
const RETRY_INTERVAL: Duration = Duration::from_millis(25);

/// An open text document on the server.
#[derive(Debug, Clone)]
pub struct DocumentHandle {
    uri: String,
    path: PathBuf,
    version: i32,
    index: LineIndex,
}

impl DocumentHandle {
    pub fn uri(&self) -> &str {
        &self.uri
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn version(&self) -> i32 {
        self.version
    }

    pub fn text(&self) -> &str {
        self.index.text()
    }

    pub fn index(&self) -> &LineIndex {
        &self.index
    }
}

#[derive(Debug, Default)]
struct DocDiagnostics {
    expected: i32,
    published: Option<(i32, Vec<Diagnostic>)>,
}

#[derive(Default)]
struct DiagnosticStore {
    docs: Mutex<HashMap<String, DocDiagnostics>>,
    changed: Condvar,
}

impl DiagnosticStore {
    fn expect(&self, uri: &str, version: i32) {
        let mut docs = self.docs.lock().unwrap();
        let doc = docs.entry(uri.to_string()).or_default();
        doc.expected = version;
        if doc.published.as_ref().is_some_and(|(v, _)| *v != version) {
            doc.published = None;
        }
    }

    fn publish(&self, uri: &str, version: Option<i32>, diagnostics: Vec<Diagnostic>) {
        let mut docs = self.docs.lock().unwrap();
        let doc = docs.entry(uri.to_string()).or_default();
        let version = version.unwrap_or(doc.expected);
        if version < doc.expected {
            log::debug!("dropping stale diagnostics for {uri} v{version}");
            return;
        }
        doc.published = Some((version, diagnostics));
        self.changed.notify_all();
    }

    fn wait(&self, uri: &str, version: i32, timeout: Duration) -> Option<Vec<Diagnostic>> {
        let deadline = Instant::now() + timeout;
        let mut docs = self.docs.lock().unwrap();
        loop {
            if let Some((v, diags)) = docs.get(uri).and_then(|d| d.published.as_ref()) {
                if *v == version {
                    return Some(diags.clone());
                }
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            docs = self.changed.wait_timeout(docs, deadline - now).unwrap().0;
        }
    }

    fn forget(&self, uri: &str) {
        self.docs.lock().unwrap().remove(uri);
    }
}

/// A live connection to a coq-lsp compatible server.
pub struct Session {
    transport: Arc<Transport>,
    store: Arc<DiagnosticStore>,
    capabilities: Value,
    server_info: Option<Value>,
    methods: ExtensionMethods,
    goal_mode: GoalMode,
    timeout: Duration,
    root: PathBuf,
    dispatcher: Option<JoinHandle<()>>,
    closed: bool,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("root", &self.root).field("closed", &self.closed).finish()
    }
}

pub fn path_to_uri(path: &Path) -> Result<String> {
    let abs = if path.is_absolute() { path.to_path_buf() } else { std::env::current_dir()?.join(path) };
    url::Url::from_file_path(&abs)
        .map(|u| u.to_string())
        .map_err(|_| Error::Config(format!("cannot form a file URI for {}", abs.display())))
}

impl Session {
    /// Spawn the server and complete the `initialize`/`initialized` handshake.
    pub fn start(config: &Config, root: &Path) -> Result<Self> {
        let command = config.server.resolved_command();
        let transport = Transport::spawn(&command, Some(root))?
            .with_default_timeout(config.timeouts.request());
        Self::handshake(transport, config, root)
    }

    /// Handshake over an already connected transport.
    pub fn handshake(transport: Transport, config: &Config, root: &Path) -> Result<Self> {
        let transport = Arc::new(transport);
        let store = Arc::new(DiagnosticStore::default());
        let inbound = transport.take_inbound().ok_or(Error::SessionClosed)?;
        let dispatcher = spawn_dispatcher(inbound, transport.clone(), store.clone(), config.methods.clone());
        let root_uri = path_to_uri(root)?;
        let params = json!({
            "processId": std::process::id(),
            "rootUri": root_uri,
            "workspaceFolders": [{"uri": root_uri, "name": "root"}],
            "capabilities": {
                "textDocument": {"publishDiagnostics": {"versionSupport": true}}
            },
            "initializationOptions": config.server.init_options,
        });
        let result = transport.call("initialize", params).map_err(|e| match e {
            RpcError::Spawn(_) => Error::Rpc(e),
            other => Error::Handshake(other.to_string()),
        })?;
        let capabilities = result
            .get("capabilities")
            .cloned()
            .ok_or_else(|| Error::Handshake("initialize result has no capabilities".into()))?;
        transport.notify("initialized", json!({})).map_err(|e| Error::Handshake(e.to_string()))?;
        Ok(Self {
            transport,
            store,
            capabilities,
            server_info: result.get("serverInfo").cloned(),
            methods: config.methods.clone(),
            goal_mode: GoalMode::Prev,
            timeout: config.timeouts.request(),
            root: root.to_path_buf(),
            dispatcher: Some(dispatcher),
            closed: false,
        })
    }

    pub fn capabilities(&self) -> &Value {
        &self.capabilities
    }

    pub fn server_info(&self) -> Option<&Value> {
        self.server_info.as_ref()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn is_closed(&self) -> bool {
        self.closed || self.transport.is_closed()
    }

    /// Kill the server process; later calls fail with a transport error.
    pub fn kill(&self) {
        self.transport.kill();
    }

    pub fn stderr_tail(&self) -> Vec<String> {
        self.transport.stderr_tail()
    }

    fn ensure_open(&self) -> Result<()> {
        if self.is_closed() {
            Err(Error::SessionClosed)
        } else {
            Ok(())
        }
    }

    pub fn open_document(&self, path: &Path, text: &str) -> Result<DocumentHandle> {
        self.ensure_open()?;
        let uri = path_to_uri(path)?;
        self.store.expect(&uri, 1);
        self.transport.notify(
            "textDocument/didOpen",
            json!({"textDocument": {"uri": uri, "languageId": LANGUAGE_ID, "version": 1, "text": text}}),
        )?;
        Ok(DocumentHandle { uri, path: path.to_path_buf(), version: 1, index: LineIndex::new(text) })
    }

    /// Replace the whole text. `version` must exceed the current one.
    pub fn update_document(&self, handle: &mut DocumentHandle, text: &str, version: i32) -> Result<()> {
        self.ensure_open()?;
        if version <= handle.version {
            return Err(Error::StaleVersion { given: version, current: handle.version });
        }
        self.store.expect(&handle.uri, version);
        self.transport.notify(
            "textDocument/didChange",
            json!({
                "textDocument": {"uri": handle.uri, "version": version},
                "contentChanges": [{"text": text}],
            }),
        )?;
        handle.version = version;
        handle.index = LineIndex::new(text);
        Ok(())
    }

    pub fn close_document(&self, handle: DocumentHandle) -> Result<()> {
        self.store.forget(&handle.uri);
        if self.is_closed() {
            return Ok(());
        }
        self.transport
            .notify("textDocument/didClose", json!({"textDocument": {"uri": handle.uri}}))?;
        Ok(())
    }

    /// Diagnostics for the handle's current version, waiting for the server
    /// to finish checking it.
    pub fn diagnostics(&self, handle: &DocumentHandle) -> Result<Vec<Diagnostic>> {
        self.ensure_open()?;
        let deadline = Instant::now() + self.timeout;
        loop {
            if let Some(d) = self.store.wait(&handle.uri, handle.version, RETRY_INTERVAL * 8) {
                return Ok(d);
            }
            self.ensure_open()?;
            if Instant::now() >= deadline {
                return Err(RpcError::Timeout {
                    method: "textDocument/publishDiagnostics".into(),
                    after: self.timeout,
                }
                .into());
            }
        }
    }

    pub fn request_goals(&self, handle: &DocumentHandle, position: Position) -> Result<GoalAnswer> {
        self.request_goals_with(handle, position, self.goal_mode)
    }

    pub fn request_goals_with(
        &self,
        handle: &DocumentHandle,
        position: Position,
        mode: GoalMode,
    ) -> Result<GoalAnswer> {
        if !handle.index.contains(position) {
            return Err(Error::PositionOutOfRange(position));
        }
        self.diagnostics(handle)?;
        let params = json!({
            "textDocument": {"uri": handle.uri, "version": handle.version},
            "position": position,
            "pp_format": "Str",
            "mode": mode,
        });
        let result = self.call_when_ready(&self.methods.goals, params)?;
        GoalAnswer::from_response(&result, position).map_err(Error::Protocol)
    }

    /// The server's sentence list with ASTs.
    pub fn request_spans(&self, handle: &DocumentHandle) -> Result<Vec<RawSpan>> {
        self.diagnostics(handle)?;
        let params = json!({
            "textDocument": {"uri": handle.uri, "version": handle.version},
            "ast": true,
            "goals": "None",
        });
        let deadline = Instant::now() + self.timeout;
        let result = loop {
            let result = self.call_when_ready(&self.methods.document, params.clone())?;
            let status = result
                .pointer("/completed/status/0")
                .and_then(Value::as_str)
                .unwrap_or("Yes");
            if status != "Stopped" || Instant::now() >= deadline {
                break result;
            }
            thread::sleep(RETRY_INTERVAL);
        };
        let spans = result
            .get("spans")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Protocol("document answer has no `spans` list".into()))?;
        let mut out = Vec::with_capacity(spans.len());
        for span in spans {
            let range: Range = serde_json::from_value(
                span.get("range").cloned().ok_or_else(|| Error::Protocol("span without range".into()))?,
            )?;
            let (start, end) = match (handle.index.offset(range.start), handle.index.offset(range.end)) {
                (Some(s), Some(e)) if s <= e => (s, e),
                _ => return Err(Error::Protocol(format!("span range {range:?} outside document"))),
            };
            out.push(RawSpan {
                range,
                text: handle.text()[start..end].to_string(),
                ast: span.get("span").cloned().unwrap_or(Value::Null),
            });
        }
        Ok(out)
    }

    /// Ask the server to write the compiled `.vo` next to the source.
    pub fn save_compiled(&self, handle: &DocumentHandle) -> Result<PathBuf> {
        let target = handle.path.with_extension("vo");
        let dir = target.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        check_writable(&dir)?;
        self.diagnostics(handle)?;
        let params = json!({"textDocument": {"uri": handle.uri, "version": handle.version}});
        match self.transport.call(&self.methods.save_vo, params) {
            Ok(_) => {}
            Err(RpcError::Server { message, .. }) => return Err(Error::CompilationRefused(message)),
            Err(e) => return Err(e.into()),
        }
        if !target.exists() {
            return Err(Error::CompilationRefused(format!(
                "server reported success but {} does not exist",
                target.display()
            )));
        }
        Ok(target)
    }

    fn call_when_ready(&self, method: &str, params: Value) -> Result<Value> {
        let deadline = Instant::now() + self.timeout;
        loop {
            match self.transport.call(method, params.clone()) {
                Err(RpcError::Server { code, message, .. })
                    if Instant::now() < deadline && not_ready(code, &message) =>
                {
                    log::debug!("{method}: server not ready ({message}); retrying");
                    thread::sleep(RETRY_INTERVAL);
                }
                other => return other.map_err(Error::from),
            }
        }
    }

    /// Send `shutdown`/`exit` and reap the server.
    pub fn shutdown(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let res = if self.transport.is_closed() {
            Ok(())
        } else {
            let r = self.transport.call_with_timeout("shutdown", Value::Null, Duration::from_secs(5));
            let _ = self.transport.notify("exit", Value::Null);
            r.map(|_| ())
        };
        self.transport.close(Duration::from_secs(1));
        if let Some(d) = self.dispatcher.take() {
            let _ = d.join();
        }
        res.map_err(Error::from)
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if let Err(e) = self.shutdown() {
            log::debug!("session shutdown: {e}");
        }
    }
}

fn not_ready(code: i64, message: &str) -> bool {
    let m = message.to_ascii_lowercase();
    matches!(code, -32800 | -32801 | -32802) || m.contains("not ready") || m.contains("not checked")
}

fn check_writable(dir: &Path) -> Result<()> {
    let probe = dir.join(format!(".coqnav-probe-{}", std::process::id()));
    std::fs::write(&probe, b"")?;
    std::fs::remove_file(&probe)?;
    Ok(())
}

fn spawn_dispatcher(
    inbound: Receiver<RpcMessage>,
    transport: Arc<Transport>,
    store: Arc<DiagnosticStore>,
    methods: ExtensionMethods,
) -> JoinHandle<()> {
    thread::Builder::new()
        .name("lsp-dispatch".into())
        .spawn(move || {
            for msg in inbound {
                match msg {
                    RpcMessage::Notification { method, params } if method == "textDocument/publishDiagnostics" => {
                        let uri = params.get("uri").and_then(Value::as_str).unwrap_or_default();
                        let version = params.get("version").and_then(Value::as_i64).map(|v| v as i32);
                        let diags = params
                            .get("diagnostics")
                            .cloned()
                            .map(serde_json::from_value::<Vec<Diagnostic>>)
                            .transpose();
                        match diags {
                            Ok(d) => store.publish(uri, version, d.unwrap_or_default()),
                            Err(e) => log::warn!("unreadable diagnostics for {uri}: {e}"),
                        }
                    }
                    RpcMessage::Notification { method, .. } if method == methods.file_progress => {}
                    RpcMessage::Notification { method, .. } => log::trace!("ignoring notification {method}"),
                    RpcMessage::Request { id, method, params } => {
                        let reply = if method == "workspace/configuration" {
                            let n = params.get("items").and_then(Value::as_array).map_or(0, Vec::len);
                            Value::Array(vec![Value::Null; n])
                        } else {
                            Value::Null
                        };
                        let _ = transport.respond(id, reply);
                    }
                    RpcMessage::Response { .. } => {}
                }
            }
        })
        .expect("spawn dispatcher")
}
