//! Model Context Protocol server: `initialize`, `tools/list` and `tools/call`
//! over newline-delimited stdio or a single HTTP POST endpoint.

mod client;
pub mod jsonrpc;
mod transport;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::clinical_tools::{ClinicalTools, ToolErrorCode};
use jsonrpc::{parse_frame, Request, RequestId, Response, RpcError, INVALID_PARAMS, METHOD_NOT_FOUND, NOT_INITIALIZED};

pub use crate::clinical_tools::{ToolDescriptor, ToolError};
pub use client::{ClientError, HttpClient, InProcessClient, ToolClient};
pub use transport::{http_router, serve_http, serve_stdio, MAX_BODY_BYTES};

pub const PROTOCOL_VERSION: &str = "2025-06-18";
pub const SERVER_NAME: &str = "ehr-mcp";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: Value,
}

/// What an agent observes from one call. `text` is the payload or the error
/// message, carried verbatim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub text: String,
    pub is_error: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<ToolErrorCode>,
}

impl ToolResult {
    /// Decodes a `tools/call` result envelope.
    pub fn from_envelope(result: &Value) -> Option<Self> {
        let text = result["content"]
            .as_array()?
            .iter()
            .filter(|c| c["type"] == "text")
            .filter_map(|c| c["text"].as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let is_error = result["isError"].as_bool().unwrap_or(false);
        let error_code = serde_json::from_value(result["_meta"]["errorCode"].clone()).ok();
        Some(Self { text, is_error, error_code })
    }
}

#[derive(Clone)]
pub struct McpServer {
    tools: ClinicalTools,
}

impl McpServer {
    pub fn new(tools: ClinicalTools) -> Self {
        Self { tools }
    }

    pub fn tools(&self) -> &ClinicalTools {
        &self.tools
    }

    /// A fresh stateful session that requires `initialize` first.
    pub fn session(&self) -> Session {
        Session { server: self.clone(), initialized: false }
    }

    /// A session treated as already initialized, for stateless transports.
    pub fn stateless_session(&self) -> Session {
        Session { server: self.clone(), initialized: true }
    }

    fn initialize_result() -> Value {
        json!({
            "protocolVersion": PROTOCOL_VERSION,
            "capabilities": {"tools": {"listChanged": false}},
            "serverInfo": {"name": SERVER_NAME, "version": env!("CARGO_PKG_VERSION")},
        })
    }

    fn call_tool(&self, params: Option<Value>) -> Result<Value, RpcError> {
        let params = params.unwrap_or(Value::Null);
        let Some(name) = params.get("name").and_then(Value::as_str) else {
            return Err(RpcError::new(INVALID_PARAMS, "Invalid params: tools/call requires a string `name`"));
        };
        let args = params.get("arguments").cloned().unwrap_or_else(|| json!({}));
        let started = Instant::now();
        let outcome = self.tools.call(name, &args);
        let elapsed_us = started.elapsed().as_micros() as u64;
        Ok(match outcome {
            Ok(payload) => {
                tracing::info!(tool = name, args = %args, elapsed_us, outcome = "ok", "tool call");
                let text = serde_json::to_string_pretty(&payload).expect("payload serializes");
                json!({"content": [{"type": "text", "text": text}], "isError": false})
            }
            Err(e) => {
                let code = e.code();
                tracing::info!(tool = name, args = %args, elapsed_us, outcome = ?code, "tool call");
                json!({
                    "content": [{"type": "text", "text": e.to_string()}],
                    "isError": true,
                    "_meta": {"errorCode": code},
                })
            }
        })
    }
}

/// Per-connection state. Requests are handled strictly in arrival order.
pub struct Session {
    server: McpServer,
    initialized: bool,
}

impl Session {
    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Handles one frame. Returns the serialized response, or `None` for a
    /// notification.
    pub fn handle_frame(&mut self, text: &str) -> Option<String> {
        let response = match parse_frame(text) {
            Ok(request) => self.handle(request)?,
            Err(response) => *response,
        };
        Some(serde_json::to_string(&response).expect("response serializes"))
    }

    pub fn handle(&mut self, request: Request) -> Option<Response> {
        let Request { id, method, params, .. } = request;
        let outcome = self.dispatch(&method, params);
        let id: RequestId = id?;
        Some(match outcome {
            Ok(result) => Response::success(Some(id), result),
            Err(error) => Response::failure(Some(id), error),
        })
    }

    fn dispatch(&mut self, method: &str, params: Option<Value>) -> Result<Value, RpcError> {
        if method == "initialize" {
            if params.as_ref().is_some_and(|p| !p.is_object()) {
                return Err(RpcError::new(INVALID_PARAMS, "Invalid params: initialize expects an object"));
            }
            self.initialized = true;
            return Ok(McpServer::initialize_result());
        }
        if method.starts_with("notifications/") {
            return Ok(Value::Null);
        }
        if !self.initialized {
            return Err(RpcError::new(
                NOT_INITIALIZED,
                format!("Server not initialized: `{method}` received before initialize"),
            ));
        }
        match method {
            "tools/list" => Ok(json!({"tools": ClinicalTools::descriptors()})),
            "tools/call" => self.server.call_tool(params),
            other => Err(RpcError::new(METHOD_NOT_FOUND, format!("Method not found: {other}"))),
        }
    }
}
