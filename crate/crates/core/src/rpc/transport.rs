use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::Value;

use super::framing::{frame_message, FrameReader};
use super::message::{RequestId, RpcMessage};
use super::RpcError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
const STDERR_TAIL: usize = 200;

type Reply = Result<Value, RpcError>;

#[derive(Default)]
struct Pending {
    waiting: HashMap<RequestId, Sender<Reply>>,
    /// Set once the inbound stream ends; carries the reason.
    closed: Option<String>,
}

/// JSON-RPC 2.0 endpoint over a pair of byte streams, usually a child's stdio.
///
/// One reader thread dispatches responses by id; one writer thread serializes
/// outbound frames. Server-initiated requests and notifications are queued on
/// the channel returned by [`Transport::take_inbound`].
pub struct Transport {
    outbound: Mutex<Option<Sender<Vec<u8>>>>,
    pending: Arc<Mutex<Pending>>,
    next_id: AtomicI64,
    inbound: Mutex<Option<Receiver<RpcMessage>>>,
    child: Mutex<Option<Child>>,
    stderr_tail: Arc<Mutex<VecDeque<String>>>,
    default_timeout: Duration,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

impl Transport {
    /// Spawn `command` and talk to it over stdin/stdout. Stderr goes to the log.
    pub fn spawn(command: &[String], cwd: Option<&Path>) -> Result<Self, RpcError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| RpcError::Spawn("empty server command".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
        if let Some(cwd) = cwd {
            cmd.current_dir(cwd);
        }
        let mut child = cmd.spawn().map_err(|e| RpcError::Spawn(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");
        let transport = Self::over(stdout, stdin);
        let tail = transport.stderr_tail.clone();
        let name = program.clone();
        let handle = thread::Builder::new()
            .name("rpc-stderr".into())
            .spawn(move || {
                for line in BufReader::new(stderr).lines() {
                    let Ok(line) = line else { break };
                    log::debug!("[{name} stderr] {line}");
                    let mut tail = tail.lock().unwrap();
                    if tail.len() == STDERR_TAIL {
                        tail.pop_front();
                    }
                    tail.push_back(line);
                }
            })
            .expect("spawn stderr thread");
        transport.threads.lock().unwrap().push(handle);
        *transport.child.lock().unwrap() = Some(child);
        Ok(transport)
    }

    /// Build a transport over arbitrary streams (used with in-process servers).
    pub fn over<R, W>(reader: R, writer: W) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let pending = Arc::new(Mutex::new(Pending::default()));
        let (out_tx, out_rx) = mpsc::channel::<Vec<u8>>();
        let (in_tx, in_rx) = mpsc::channel();

        let writer_pending = pending.clone();
        let writer_thread = thread::Builder::new()
            .name("rpc-writer".into())
            .spawn(move || {
                let mut writer = writer;
                for frame in out_rx {
                    if let Err(e) = writer.write_all(&frame).and_then(|_| writer.flush()) {
                        close_pending(&writer_pending, format!("write failed: {e}"));
                        break;
                    }
                }
            })
            .expect("spawn writer thread");

        let reader_pending = pending.clone();
        let reader_thread = thread::Builder::new()
            .name("rpc-reader".into())
            .spawn(move || read_loop(reader, reader_pending, in_tx))
            .expect("spawn reader thread");

        Self {
            outbound: Mutex::new(Some(out_tx)),
            pending,
            next_id: AtomicI64::new(1),
            inbound: Mutex::new(Some(in_rx)),
            child: Mutex::new(None),
            stderr_tail: Arc::new(Mutex::new(VecDeque::new())),
            default_timeout: DEFAULT_TIMEOUT,
            threads: Mutex::new(vec![writer_thread, reader_thread]),
        }
    }

    pub fn with_default_timeout(mut self, timeout: Duration) -> Self {
        self.default_timeout = timeout;
        self
    }

    pub fn default_timeout(&self) -> Duration {
        self.default_timeout
    }

    /// The queue of server-initiated messages. Can be taken once.
    pub fn take_inbound(&self) -> Option<Receiver<RpcMessage>> {
        self.inbound.lock().unwrap().take()
    }

    pub fn is_closed(&self) -> bool {
        self.pending.lock().unwrap().closed.is_some()
    }

    /// Last lines the server wrote to stderr.
    pub fn stderr_tail(&self) -> Vec<String> {
        self.stderr_tail.lock().unwrap().iter().cloned().collect()
    }

    pub fn call(&self, method: &str, params: Value) -> Result<Value, RpcError> {
        self.call_with_timeout(method, params, self.default_timeout)
    }

    pub fn call_with_timeout(
        &self,
        method: &str,
        params: Value,
        timeout: Duration,
    ) -> Result<Value, RpcError> {
        let id = RequestId::Num(self.next_id.fetch_add(1, Ordering::SeqCst));
        let (tx, rx) = mpsc::channel();
        {
            let mut pending = self.pending.lock().unwrap();
            if let Some(reason) = &pending.closed {
                return Err(RpcError::TransportClosed(reason.clone()));
            }
            pending.waiting.insert(id.clone(), tx);
        }
        let frame = frame_message(&RpcMessage::request(id.clone(), method, params).to_json());
        if let Err(e) = self.send_frame(frame) {
            self.pending.lock().unwrap().waiting.remove(&id);
            return Err(e);
        }
        match rx.recv_timeout(timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().unwrap().waiting.remove(&id);
                Err(RpcError::Timeout { method: method.to_string(), after: timeout })
            }
            Err(RecvTimeoutError::Disconnected) => Err(RpcError::TransportClosed(
                self.pending.lock().unwrap().closed.clone().unwrap_or_else(|| "reader stopped".into()),
            )),
        }
    }

    pub fn notify(&self, method: &str, params: Value) -> Result<(), RpcError> {
        if let Some(reason) = &self.pending.lock().unwrap().closed {
            return Err(RpcError::TransportClosed(reason.clone()));
        }
        self.send_frame(frame_message(&RpcMessage::notification(method, params).to_json()))
    }

    /// Answer a server-initiated request.
    pub fn respond(&self, id: RequestId, result: Value) -> Result<(), RpcError> {
        let msg = RpcMessage::Response { id, outcome: Ok(result) };
        self.send_frame(frame_message(&msg.to_json()))
    }

    fn send_frame(&self, frame: Vec<u8>) -> Result<(), RpcError> {
        let guard = self.outbound.lock().unwrap();
        let Some(tx) = guard.as_ref() else {
            return Err(RpcError::TransportClosed("transport shut down".into()));
        };
        tx.send(frame).map_err(|_| RpcError::TransportClosed("writer stopped".into()))
    }

    /// Stop writing (closes the server's stdin) and reap the child.
    pub fn close(&self, grace: Duration) {
        self.outbound.lock().unwrap().take();
        if let Some(mut child) = self.child.lock().unwrap().take() {
            let deadline = std::time::Instant::now() + grace;
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if std::time::Instant::now() < deadline => {
                        thread::sleep(Duration::from_millis(5))
                    }
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
        }
        close_pending(&self.pending, "transport shut down".into());
    }

    /// Kill the server immediately.
    pub fn kill(&self) {
        if let Some(child) = self.child.lock().unwrap().as_mut() {
            let _ = child.kill();
        }
    }
}

impl Drop for Transport {
    fn drop(&mut self) {
        self.close(Duration::from_millis(200));
        for handle in self.threads.lock().unwrap().drain(..) {
            // The reader may still block on a stream we don't own; don't wait on it.
            if handle.is_finished() {
                let _ = handle.join();
            }
        }
    }
}

fn close_pending(pending: &Mutex<Pending>, reason: String) {
    let mut pending = pending.lock().unwrap();
    if pending.closed.is_none() {
        pending.closed = Some(reason.clone());
    }
    for (_, tx) in pending.waiting.drain() {
        let _ = tx.send(Err(RpcError::TransportClosed(reason.clone())));
    }
}

fn read_loop<R: Read>(reader: R, pending: Arc<Mutex<Pending>>, inbound: Sender<RpcMessage>) {
    let mut frames = FrameReader::new(reader);
    let reason = loop {
        let body = match frames.read_body() {
            Ok(Some(body)) => body,
            Ok(None) => break "server closed its output".to_string(),
            Err(e) => break format!("fatal transport error: {e}"),
        };
        let msg = match RpcMessage::parse(&body) {
            Ok(msg) => msg,
            Err(e) => break format!("fatal transport error: {e}"),
        };
        match msg {
            RpcMessage::Response { id, outcome } => {
                let waiter = pending.lock().unwrap().waiting.remove(&id);
                match waiter {
                    Some(tx) => {
                        let _ = tx.send(outcome.map_err(RpcError::from));
                    }
                    None => log::warn!("response for unknown request id {id}"),
                }
            }
            other => {
                let _ = inbound.send(other);
            }
        }
    };
    log::debug!("rpc reader stopping: {reason}");
    close_pending(&pending, reason);
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::io::pipe;

    /// An in-process scripted server. `script` gets every inbound message and
    /// the writer, and decides what to send back.
    fn scripted<F>(mut script: F) -> (Transport, JoinHandle<Vec<RpcMessage>>)
    where
        F: FnMut(&RpcMessage, &mut dyn Write, &mut Vec<RpcMessage>) -> bool + Send + 'static,
    {
        let (client_read, mut server_write) = pipe().unwrap();
        let (server_read, client_write) = pipe().unwrap();
        let server = thread::spawn(move || {
            let mut frames = FrameReader::new(server_read);
            let mut seen = Vec::new();
            let mut held = Vec::new();
            while let Ok(Some(body)) = frames.read_body() {
                let msg = RpcMessage::parse(&body).unwrap();
                let keep_going = script(&msg, &mut server_write, &mut held);
                seen.push(msg);
                if !keep_going {
                    break;
                }
            }
            seen
        });
        (Transport::over(client_read, client_write), server)
    }

    fn reply(w: &mut dyn Write, id: &RequestId, result: Value) {
        let msg = RpcMessage::Response { id: id.clone(), outcome: Ok(result) };
        w.write_all(&frame_message(&msg.to_json())).unwrap();
        w.flush().unwrap();
    }

    #[test]
    fn echo_call() {
        let (t, _server) = scripted(|msg, w, _| {
            if let RpcMessage::Request { id, params, .. } = msg {
                reply(w, id, params.clone());
            }
            true
        });
        let got = t.call("echo", json!({"a": [1, 2]})).unwrap();
        assert_eq!(got, json!({"a": [1, 2]}));
    }

    #[test]
    fn ids_start_at_one_and_increase() {
        let (t, server) = scripted(|msg, w, _| {
            if let RpcMessage::Request { id, .. } = msg {
                reply(w, id, Value::Null);
            }
            true
        });
        for _ in 0..3 {
            t.call("m", Value::Null).unwrap();
        }
        drop(t);
        let ids: Vec<_> = server
            .join()
            .unwrap()
            .into_iter()
            .filter_map(|m| match m {
                RpcMessage::Request { id, .. } => Some(id),
                _ => None,
            })
            .collect();
        assert_eq!(ids, vec![RequestId::Num(1), RequestId::Num(2), RequestId::Num(3)]);
    }

    #[test]
    fn reverse_order_replies_reach_their_callers() {
        // Hold the first request, answer both once the second arrives.
        let (t, _server) = scripted(|msg, w, held| {
            if let RpcMessage::Request { .. } = msg {
                held.push(msg.clone());
                if held.len() == 2 {
                    for m in held.iter().rev() {
                        if let RpcMessage::Request { id, params, .. } = m {
                            reply(w, id, params.clone());
                        }
                    }
                }
            }
            true
        });
        let t = Arc::new(t);
        let a = {
            let t = t.clone();
            thread::spawn(move || t.call("first", json!("A")).unwrap())
        };
        thread::sleep(Duration::from_millis(50));
        let b = t.call("second", json!("B")).unwrap();
        assert_eq!(b, json!("B"));
        assert_eq!(a.join().unwrap(), json!("A"));
    }

    #[test]
    fn server_error_is_surfaced() {
        let (t, _server) = scripted(|msg, w, _| {
            if let RpcMessage::Request { id, .. } = msg {
                let m = RpcMessage::Response {
                    id: id.clone(),
                    outcome: Err(super::super::message::ResponseError {
                        code: -32803,
                        message: "boom".into(),
                        data: None,
                    }),
                };
                w.write_all(&frame_message(&m.to_json())).unwrap();
            }
            true
        });
        match t.call("x", Value::Null) {
            Err(RpcError::Server { code, message, .. }) => {
                assert_eq!(code, -32803);
                assert_eq!(message, "boom");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn call_after_server_exit_is_transport_closed() {
        let (t, server) = scripted(|_, _, _| false);
        t.notify("bye", Value::Null).unwrap();
        server.join().unwrap();
        // Reader sees EOF once the server thread drops its write end.
        let deadline = std::time::Instant::now() + Duration::from_secs(5);
        while !t.is_closed() && std::time::Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
        assert!(matches!(t.call("x", Value::Null), Err(RpcError::TransportClosed(_))));
        assert!(matches!(t.notify("x", Value::Null), Err(RpcError::TransportClosed(_))));
    }

    #[test]
    fn timeout_is_reported() {
        let (t, _server) = scripted(|_, _, _| true);
        let err = t.call_with_timeout("slow", Value::Null, Duration::from_millis(30)).unwrap_err();
        assert!(matches!(err, RpcError::Timeout { .. }));
    }

    #[test]
    fn thousand_notifications_in_order() {
        let (t, server) = scripted(|_, _, _| true);
        for i in 0..1000 {
            t.notify("tick", json!(i)).unwrap();
        }
        t.close(Duration::from_millis(10));
        let seen = server.join().unwrap();
        assert_eq!(seen.len(), 1000);
        for (i, m) in seen.iter().enumerate() {
            assert_eq!(m, &RpcMessage::notification("tick", json!(i)));
        }
    }

    #[test]
    fn server_requests_are_queued() {
        let (t, _server) = scripted(|msg, w, _| {
            if let RpcMessage::Request { id, .. } = msg {
                let note = RpcMessage::notification("window/logMessage", json!({"message": "hi"}));
                w.write_all(&frame_message(&note.to_json())).unwrap();
                reply(w, id, Value::Null);
            }
            true
        });
        let inbound = t.take_inbound().unwrap();
        t.call("m", Value::Null).unwrap();
        let note = inbound.recv_timeout(Duration::from_secs(1)).unwrap();
        assert_eq!(note.method(), Some("window/logMessage"));
    }

    #[test]
    fn spawn_failure() {
        let err = Transport::spawn(&["/nonexistent/coq-lsp-binary".to_string()], None).err().unwrap();
        assert!(matches!(err, RpcError::Spawn(_)));
    }
}
