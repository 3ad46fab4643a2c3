use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::rpc::ResponseError;

pub const FIXTURE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default)]
    pub format: u32,
    pub server_name: Option<String>,
    pub server_version: Option<String>,
    pub coq_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub method: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub method: String,
    pub params: Value,
}

/// One client message and what the server did about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    #[serde(rename = "match")]
    pub matcher: Match,
    /// Result of a request. Entries for client notifications have neither
    /// this nor `error`.
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "present")]
    pub respond: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ResponseError>,
    /// Sent on receipt, before the response.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notify_before: Vec<Notification>,
    /// Sent after the response.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notify_after: Vec<Notification>,
    /// Never answer the request.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub hold: bool,
    /// Answer only after the next request has been answered.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub defer: bool,
}

/// A present `null` is still a response.
fn present<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Value>, D::Error> {
    Value::deserialize(d).map(Some)
}

impl Entry {
    pub fn new(method: &str, digest: String) -> Self {
        Entry {
            matcher: Match { method: method.to_string(), digest },
            respond: None,
            error: None,
            notify_before: vec![],
            notify_after: vec![],
            hold: false,
            defer: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub metadata: Metadata,
    pub entries: Vec<Entry>,
}

impl Fixture {
    pub fn load(path: &std::path::Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}

/// Placeholders standing for machine-specific paths. A binding covers the
/// plain path and the percent-encoded path inside `file:` URIs.
#[derive(Debug, Clone, Default)]
pub struct Substitutions {
    /// Longest path first, so nested bindings resolve to the innermost.
    bindings: Vec<Binding>,
}

#[derive(Debug, Clone)]
struct Binding {
    placeholder: String,
    path: String,
    uri_path: String,
}

impl Substitutions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bind `${name}` to `path`.
    pub fn bind(&mut self, name: &str, path: &str) {
        let path = path.trim_end_matches('/');
        if path.is_empty() {
            return;
        }
        let placeholder = format!("${{{name}}}");
        let uri_path = url::Url::from_file_path(path)
            .map(|u| u.path().trim_end_matches('/').to_string())
            .unwrap_or_else(|_| path.to_string());
        self.bindings.retain(|b| b.placeholder != placeholder);
        self.bindings.push(Binding { placeholder, path: path.to_string(), uri_path });
        self.bindings.sort_by(|a, b| b.path.len().cmp(&a.path.len()));
    }

    /// Bind `${root}` from the `rootUri` of an `initialize` request.
    pub fn bind_root_uri(&mut self, uri: &str) {
        if let Some(path) = url::Url::parse(uri).ok().and_then(|u| u.to_file_path().ok()) {
            self.bind("root", &path.to_string_lossy());
        }
    }

    /// Parse `NAME=PATH`.
    pub fn bind_arg(&mut self, arg: &str) -> Result<(), String> {
        let (name, path) = arg.split_once('=').ok_or_else(|| format!("expected NAME=PATH, got {arg:?}"))?;
        if name.is_empty() {
            return Err(format!("empty placeholder name in {arg:?}"));
        }
        self.bind(name, path);
        Ok(())
    }

    fn placeholders_in(&self, s: &str) -> String {
        let uri = s.starts_with("file:");
        let mut out = s.to_string();
        for b in &self.bindings {
            out = out.replace(if uri { &b.uri_path } else { &b.path }, &b.placeholder);
        }
        out
    }

    fn actuals_in(&self, s: &str) -> String {
        let uri = s.starts_with("file:");
        let mut out = s.to_string();
        for b in &self.bindings {
            out = out.replace(&b.placeholder, if uri { &b.uri_path } else { &b.path });
        }
        out
    }

    /// Replace actual paths by placeholders.
    pub fn abstract_value(&self, v: &Value) -> Value {
        map_strings(v, &|s| self.placeholders_in(s))
    }

    /// Replace placeholders by actual paths.
    pub fn concrete_value(&self, v: &Value) -> Value {
        map_strings(v, &|s| self.actuals_in(s))
    }
}

fn map_strings(v: &Value, f: &dyn Fn(&str) -> String) -> Value {
    match v {
        Value::String(s) => Value::String(f(s)),
        Value::Array(a) => Value::Array(a.iter().map(|x| map_strings(x, f)).collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, x)| (k.clone(), map_strings(x, f))).collect()),
        other => other.clone(),
    }
}

const MASKED: &[&str] = &["version", "processId"];

fn canonical(v: &Value) -> Value {
    match v {
        Value::Array(a) => Value::Array(a.iter().map(canonical).collect()),
        Value::Object(o) => {
            let mut keys: Vec<&String> = o.keys().collect();
            keys.sort();
            let mut out = Map::new();
            for k in keys {
                let x = if MASKED.contains(&k.as_str()) { Value::Null } else { canonical(&o[k]) };
                out.insert(k.clone(), x);
            }
            Value::Object(out)
        }
        other => other.clone(),
    }
}

/// Digest identifying a message independent of document versions, process
/// ids, key order and machine paths.
pub fn digest(method: &str, params: &Value, subs: &Substitutions) -> String {
    let norm = canonical(&subs.abstract_value(params));
    let mut h = Sha256::new();
    h.update(method.as_bytes());
    h.update([0]);
    h.update(norm.to_string().as_bytes());
    hex::encode(h.finalize())
}
