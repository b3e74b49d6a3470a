//! JSON-RPC 2.0 framing.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
/// Server-defined: a method other than `initialize` arrived first.
pub const NOT_INITIALIZED: i64 = -32002;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RequestId {
    Number(i64),
    String(String),
}

impl From<i64> for RequestId {
    fn from(n: i64) -> Self {
        RequestId::Number(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub jsonrpc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<RequestId>,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Value>,
}

impl Request {
    pub fn new(id: impl Into<RequestId>, method: &str, params: Option<Value>) -> Self {
        Self { jsonrpc: "2.0".into(), id: Some(id.into()), method: method.into(), params }
    }

    pub fn notification(method: &str) -> Self {
        Self { jsonrpc: "2.0".into(), id: None, method: method.into(), params: None }
    }

    pub fn is_notification(&self) -> bool {
        self.id.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl RpcError {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), data: None }
    }
}

/// `result` and `error` are mutually exclusive; the constructors uphold that.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub jsonrpc: String,
    /// `None` serializes as `null`, used when the request id is unknowable.
    pub id: Option<RequestId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RpcError>,
}

impl Response {
    pub fn success(id: Option<RequestId>, result: Value) -> Self {
        Self { jsonrpc: "2.0".into(), id, result: Some(result), error: None }
    }

    pub fn failure(id: Option<RequestId>, error: RpcError) -> Self {
        Self { jsonrpc: "2.0".into(), id, result: None, error: Some(error) }
    }
}

/// Outcome of reading one frame: a well-formed request, or an error response
/// that must be sent back as-is.
pub(crate) fn parse_frame(text: &str) -> Result<Request, Box<Response>> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Box::new(Response::failure(None, RpcError::new(PARSE_ERROR, format!("Parse error: {e}")))))?;
    let Value::Object(obj) = &value else {
        return Err(Box::new(Response::failure(
            None,
            RpcError::new(INVALID_REQUEST, "Invalid Request: expected a JSON object"),
        )));
    };
    let id = match obj.get("id") {
        None => None,
        Some(raw) => match serde_json::from_value::<RequestId>(raw.clone()) {
            Ok(id) => Some(id),
            Err(_) => {
                return Err(Box::new(Response::failure(
                    None,
                    RpcError::new(INVALID_REQUEST, "Invalid Request: id must be an integer or a string"),
                )))
            }
        },
    };
    let invalid = |why: &str| {
        Box::new(Response::failure(id.clone(), RpcError::new(INVALID_REQUEST, format!("Invalid Request: {why}"))))
    };
    if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return Err(invalid("jsonrpc must be \"2.0\""));
    }
    let Some(method) = obj.get("method").and_then(Value::as_str) else {
        return Err(invalid("method must be a string"));
    };
    Ok(Request { jsonrpc: "2.0".into(), id: id.clone(), method: method.to_owned(), params: obj.get("params").cloned() })
}
