use std::collections::HashMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;

use serde_json::Value;

use super::fixture::{digest, Entry, Fixture, Metadata, Notification, Substitutions, FIXTURE_FORMAT};
use super::MockError;
use crate::rpc::{frame_message, FrameReader, RequestId, RpcMessage};

#[derive(Default)]
struct State {
    subs: Substitutions,
    entries: Vec<Entry>,
    /// Request entries by id, until answered.
    waiting: HashMap<RequestId, usize>,
    answered: Vec<bool>,
    is_request: Vec<bool>,
    metadata: Option<Metadata>,
}

impl State {
    fn on_server(&mut self, msg: &RpcMessage) {
        match msg {
            RpcMessage::Response { id, outcome } => {
                let Some(i) = self.waiting.remove(id) else { return };
                for j in 0..i {
                    if self.is_request[j] && !self.answered[j] {
                        self.entries[j].defer = true;
                    }
                }
                self.answered[i] = true;
                let e = &mut self.entries[i];
                match outcome {
                    Ok(v) => e.respond = Some(self.subs.abstract_value(v)),
                    Err(err) => e.error = Some(err.clone()),
                }
                if e.matcher.method == "initialize" {
                    if let Ok(v) = outcome {
                        self.metadata = Some(metadata_of(v));
                    }
                }
            }
            RpcMessage::Notification { method, params } => {
                let Some(i) = self.entries.len().checked_sub(1) else { return };
                let n = Notification { method: method.clone(), params: self.subs.abstract_value(params) };
                if self.is_request[i] && !self.answered[i] {
                    self.entries[i].notify_before.push(n);
                } else {
                    self.entries[i].notify_after.push(n);
                }
            }
            // requests from the server are passed to the client but not kept
            RpcMessage::Request { .. } => {}
        }
    }

    fn on_client(&mut self, id: Option<&RequestId>, method: &str, params: &Value) {
        if method == "initialize" {
            if let Some(uri) = params.get("rootUri").and_then(Value::as_str) {
                self.subs.bind_root_uri(uri);
            }
        }
        let i = self.entries.len();
        self.entries.push(Entry::new(method, digest(method, params, &self.subs)));
        self.answered.push(id.is_none());
        self.is_request.push(id.is_some());
        if let Some(id) = id {
            self.waiting.insert(id.clone(), i);
        }
    }

    fn finish(mut self) -> Fixture {
        for i in 0..self.entries.len() {
            if self.is_request[i] && !self.answered[i] {
                self.entries[i].hold = true;
                self.entries[i].defer = false;
            }
        }
        Fixture { metadata: self.metadata.unwrap_or_else(|| metadata_of(&Value::Null)), entries: self.entries }
    }
}

fn metadata_of(init: &Value) -> Metadata {
    let info = init.get("serverInfo");
    let field = |k| info.and_then(|i| i.get(k)).and_then(Value::as_str).map(str::to_string);
    let server_version = field("version");
    // coq-lsp reports versions as `<lsp>+<coq>`
    let coq_version = field("coqVersion")
        .or_else(|| server_version.as_deref().and_then(|v| v.split_once('+')).map(|(_, c)| c.to_string()));
    Metadata { format: FIXTURE_FORMAT, server_name: field("name"), server_version, coq_version }
}

/// Run `command` as the server, relay traffic between it and the client on
/// `input`/`output`, and return what was observed once the client exits or
/// hangs up.
pub fn record<R: Read, W: Write + Send>(
    command: &[String],
    subs: Substitutions,
    input: R,
    mut output: W,
) -> Result<Fixture, MockError> {
    let (program, args) = command.split_first().ok_or(MockError::NoCommand)?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| MockError::Spawn(format!("{program}: {e}")))?;
    let mut server_in = child.stdin.take().expect("piped stdin");
    let server_out = child.stdout.take().expect("piped stdout");
    let state = Mutex::new(State { subs, ..State::default() });

    let result = thread::scope(|scope| -> Result<(), MockError> {
        let relay = scope.spawn(|| -> Result<(), MockError> {
            let mut reader = FrameReader::new(server_out);
            while let Some(body) = reader.read_body()? {
                match RpcMessage::parse(&body) {
                    Ok(msg) => state.lock().unwrap().on_server(&msg),
                    Err(e) => log::warn!("unparseable server message: {e}"),
                }
                output.write_all(&frame_message(&body))?;
                output.flush()?;
            }
            Ok(())
        });
        let mut reader = FrameReader::new(input);
        let mut outcome = Ok(());
        loop {
            let body = match reader.read_body() {
                Ok(Some(b)) => b,
                Ok(None) => break,
                Err(e) => {
                    outcome = Err(e.into());
                    break;
                }
            };
            let exit = match RpcMessage::parse(&body) {
                Ok(RpcMessage::Request { id, method, params }) => {
                    state.lock().unwrap().on_client(Some(&id), &method, &params);
                    false
                }
                Ok(RpcMessage::Notification { method, params }) => {
                    state.lock().unwrap().on_client(None, &method, &params);
                    method == "exit"
                }
                Ok(RpcMessage::Response { .. }) => false,
                Err(e) => {
                    log::warn!("unparseable client message: {e}");
                    false
                }
            };
            if server_in.write_all(&frame_message(&body)).and_then(|_| server_in.flush()).is_err() {
                break;
            }
            if exit {
                break;
            }
        }
        drop(server_in);
        let relayed = relay.join().expect("relay thread");
        outcome.and(relayed)
    });
    let _ = child.wait();
    result?;
    Ok(state.into_inner().unwrap().finish())
}
