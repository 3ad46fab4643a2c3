use std::io::{Read, Write};

use serde_json::Value;

use super::fixture::{digest, Entry, Fixture, Notification, Substitutions};
use super::MockError;
use crate::rpc::{frame_message, FrameReader, RequestId, ResponseError, RpcMessage};

/// Code of the error response sent for a request the fixture cannot answer.
pub const UNMATCHED_CODE: i64 = -32099;

/// How a replay ended without error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayEnd {
    /// The client sent `exit`.
    Exit,
    /// The client closed its end of the stream.
    Eof,
}

/// Serve `fixture` to one client reading from `input` and writing to `output`.
///
/// `${root}` is bound from the `initialize` request on top of `subs`.
pub fn replay<R: Read, W: Write>(
    fixture: &Fixture,
    mut subs: Substitutions,
    input: R,
    mut output: W,
) -> Result<ReplayEnd, MockError> {
    let mut reader = FrameReader::new(input);
    let mut used = vec![false; fixture.entries.len()];
    let mut deferred: Vec<(RequestId, &Entry)> = Vec::new();
    loop {
        let Some(body) = reader.read_body()? else { return Ok(ReplayEnd::Eof) };
        let msg = RpcMessage::parse(&body)?;
        let (id, method, params) = match msg {
            RpcMessage::Request { id, method, params } => (Some(id), method, params),
            RpcMessage::Notification { method, params } => (None, method, params),
            // answers to server requests; the fixture never sends any
            RpcMessage::Response { .. } => continue,
        };
        if method == "initialize" {
            if let Some(uri) = params.get("rootUri").and_then(Value::as_str) {
                subs.bind_root_uri(uri);
            }
        }
        let d = digest(&method, &params, &subs);
        let found = fixture
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| !used[*i] && e.matcher.method == method && e.matcher.digest == d);
        let Some((i, entry)) = found else {
            let seen = fixture.entries.iter().any(|e| e.matcher.method == method && e.matcher.digest == d);
            let err = if seen {
                MockError::Exhausted { method: method.clone(), digest: d }
            } else {
                MockError::Unmatched { method: method.clone(), digest: d }
            };
            if let Some(id) = id {
                let outcome = Err(ResponseError { code: UNMATCHED_CODE, message: err.to_string(), data: None });
                send(&mut output, &RpcMessage::Response { id, outcome })?;
            }
            return Err(err);
        };
        used[i] = true;
        notify(&mut output, &entry.notify_before, &subs)?;
        if let Some(id) = id {
            if entry.hold {
                // never answered
            } else if entry.defer {
                deferred.push((id, entry));
                continue;
            } else {
                respond(&mut output, id, entry, &subs)?;
                notify(&mut output, &entry.notify_after, &subs)?;
                for (id, e) in deferred.drain(..) {
                    respond(&mut output, id, e, &subs)?;
                    notify(&mut output, &e.notify_after, &subs)?;
                }
            }
        } else {
            notify(&mut output, &entry.notify_after, &subs)?;
        }
        if method == "exit" {
            return Ok(ReplayEnd::Exit);
        }
    }
}

fn send<W: Write>(out: &mut W, msg: &RpcMessage) -> std::io::Result<()> {
    out.write_all(&frame_message(&msg.to_json()))?;
    out.flush()
}

fn notify<W: Write>(out: &mut W, list: &[Notification], subs: &Substitutions) -> std::io::Result<()> {
    for n in list {
        send(out, &RpcMessage::notification(n.method.clone(), subs.concrete_value(&n.params)))?;
    }
    Ok(())
}

fn respond<W: Write>(out: &mut W, id: RequestId, e: &Entry, subs: &Substitutions) -> std::io::Result<()> {
    let outcome = match &e.error {
        Some(err) => Err(err.clone()),
        None => Ok(subs.concrete_value(e.respond.as_ref().unwrap_or(&Value::Null))),
    };
    send(out, &RpcMessage::Response { id, outcome })
}
