use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::RpcError;

/// JSON-RPC request id. We only ever issue integers; servers may use strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RequestId {
    Num(i64),
    Str(String),
}

impl From<i64> for RequestId {
    fn from(n: i64) -> Self {
        RequestId::Num(n)
    }
}

impl std::fmt::Display for RequestId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RequestId::Num(n) => write!(f, "{n}"),
            RequestId::Str(s) => write!(f, "{s:?}"),
        }
    }
}

/// The `error` member of a failed response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseError {
    pub code: i64,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RpcMessage {
    Request { id: RequestId, method: String, params: Value },
    Response { id: RequestId, outcome: Result<Value, ResponseError> },
    Notification { method: String, params: Value },
}

impl RpcMessage {
    pub fn request(id: impl Into<RequestId>, method: impl Into<String>, params: Value) -> Self {
        RpcMessage::Request { id: id.into(), method: method.into(), params }
    }

    pub fn notification(method: impl Into<String>, params: Value) -> Self {
        RpcMessage::Notification { method: method.into(), params }
    }

    pub fn method(&self) -> Option<&str> {
        match self {
            RpcMessage::Request { method, .. } | RpcMessage::Notification { method, .. } => {
                Some(method)
            }
            RpcMessage::Response { .. } => None,
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            RpcMessage::Request { id, method, params } => {
                json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params})
            }
            RpcMessage::Notification { method, params } => {
                json!({"jsonrpc": "2.0", "method": method, "params": params})
            }
            RpcMessage::Response { id, outcome: Ok(result) } => {
                json!({"jsonrpc": "2.0", "id": id, "result": result})
            }
            RpcMessage::Response { id, outcome: Err(error) } => {
                json!({"jsonrpc": "2.0", "id": id, "error": error})
            }
        }
    }

    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }

    pub fn from_value(value: Value) -> Result<Self, RpcError> {
        let Value::Object(mut obj) = value else {
            return Err(RpcError::InvalidMessage("message is not a JSON object".into()));
        };
        let id = take_id(&mut obj)?;
        let method = match obj.remove("method") {
            Some(Value::String(m)) => Some(m),
            Some(_) => return Err(RpcError::InvalidMessage("method is not a string".into())),
            None => None,
        };
        match (id, method) {
            (Some(id), Some(method)) => Ok(RpcMessage::Request {
                id,
                method,
                params: obj.remove("params").unwrap_or(Value::Null),
            }),
            (None, Some(method)) => Ok(RpcMessage::Notification {
                method,
                params: obj.remove("params").unwrap_or(Value::Null),
            }),
            (Some(id), None) => {
                let result = obj.remove("result");
                let error = obj.remove("error");
                let outcome = match (result, error) {
                    (Some(_), Some(e)) if !e.is_null() => {
                        return Err(RpcError::InvalidMessage(
                            "response carries both result and error".into(),
                        ))
                    }
                    (_, Some(e)) if !e.is_null() => Err(serde_json::from_value(e)?),
                    (Some(r), _) => Ok(r),
                    (None, _) => {
                        return Err(RpcError::InvalidMessage(
                            "response carries neither result nor error".into(),
                        ))
                    }
                };
                Ok(RpcMessage::Response { id, outcome })
            }
            (None, None) => Err(RpcError::InvalidMessage("message has neither id nor method".into())),
        }
    }

    pub fn parse(body: &str) -> Result<Self, RpcError> {
        Self::from_value(serde_json::from_str(body)?)
    }
}

fn take_id(obj: &mut Map<String, Value>) -> Result<Option<RequestId>, RpcError> {
    match obj.remove("id") {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v)
            .map(Some)
            .map_err(|_| RpcError::InvalidMessage("id is neither integer nor string".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_kinds() {
        let req = RpcMessage::parse(r#"{"jsonrpc":"2.0","id":1,"method":"m","params":{"x":1}}"#).unwrap();
        assert!(matches!(req, RpcMessage::Request { id: RequestId::Num(1), .. }));
        let note = RpcMessage::parse(r#"{"jsonrpc":"2.0","method":"n"}"#).unwrap();
        assert_eq!(note, RpcMessage::notification("n", Value::Null));
        let resp = RpcMessage::parse(r#"{"jsonrpc":"2.0","id":"a","result":null}"#).unwrap();
        assert_eq!(resp, RpcMessage::Response { id: RequestId::Str("a".into()), outcome: Ok(Value::Null) });
    }

    #[test]
    fn error_response() {
        let resp =
            RpcMessage::parse(r#"{"jsonrpc":"2.0","id":3,"error":{"code":-32601,"message":"nope"}}"#).unwrap();
        let RpcMessage::Response { outcome: Err(e), .. } = resp else { panic!() };
        assert_eq!(e.code, -32601);
        assert_eq!(e.message, "nope");
    }

    #[test]
    fn response_needs_exactly_one_member() {
        assert!(RpcMessage::parse(r#"{"jsonrpc":"2.0","id":3}"#).is_err());
        assert!(RpcMessage::parse(
            r#"{"jsonrpc":"2.0","id":3,"result":1,"error":{"code":1,"message":"x"}}"#
        )
        .is_err());
    }

    #[test]
    fn notifications_serialize_without_id() {
        let v = RpcMessage::notification("exit", Value::Null).to_value();
        assert!(v.get("id").is_none());
    }
}
