use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use super::jsonrpc::{Request, RequestId, Response};
use super::{McpServer, Session, ToolCall, ToolDescriptor, ToolResult, PROTOCOL_VERSION};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("rpc error {code}: {message}")]
    Rpc { code: i64, message: String },
    #[error("protocol: {0}")]
    Protocol(String),
}

/// The agent's handle on an MCP server.
pub trait ToolClient {
    fn list_tools(&mut self) -> Result<Vec<ToolDescriptor>, ClientError>;
    fn call_tool(&mut self, call: &ToolCall) -> Result<ToolResult, ClientError>;
}

/// Shared request/response plumbing; implementors only move frames.
trait FrameTransport {
    fn next_id(&mut self) -> i64;
    fn exchange(&mut self, frame: String) -> Result<Option<String>, ClientError>;

    fn request(&mut self, method: &str, params: Option<Value>) -> Result<Value, ClientError> {
        let id = self.next_id();
        let frame = serde_json::to_string(&Request::new(id, method, params)).expect("request serializes");
        let reply =
            self.exchange(frame)?.ok_or_else(|| ClientError::Protocol(format!("no response to request {id}")))?;
        let response: Response =
            serde_json::from_str(&reply).map_err(|e| ClientError::Protocol(format!("bad response: {e}")))?;
        if response.id != Some(RequestId::Number(id)) {
            return Err(ClientError::Protocol(format!("response id {:?} does not match request {id}", response.id)));
        }
        match (response.result, response.error) {
            (Some(result), None) => Ok(result),
            (None, Some(e)) => Err(ClientError::Rpc { code: e.code, message: e.message }),
            _ => Err(ClientError::Protocol("response must carry exactly one of result/error".into())),
        }
    }

    fn handshake(&mut self) -> Result<(), ClientError> {
        self.request(
            "initialize",
            Some(json!({
                "protocolVersion": PROTOCOL_VERSION,
                "capabilities": {},
                "clientInfo": {"name": "ehr-mcp-agent", "version": env!("CARGO_PKG_VERSION")},
            })),
        )?;
        let note = serde_json::to_string(&Request::notification("notifications/initialized")).expect("serializes");
        self.exchange(note)?;
        Ok(())
    }

    fn list(&mut self) -> Result<Vec<ToolDescriptor>, ClientError> {
        let result = self.request("tools/list", None)?;
        serde_json::from_value(result["tools"].clone())
            .map_err(|e| ClientError::Protocol(format!("bad tools/list: {e}")))
    }

    fn call(&mut self, call: &ToolCall) -> Result<ToolResult, ClientError> {
        let result = self.request("tools/call", Some(json!({"name": call.name, "arguments": call.arguments})))?;
        ToolResult::from_envelope(&result).ok_or_else(|| ClientError::Protocol("bad tools/call result".into()))
    }
}

/// Talks to a server session in the same process through full JSON-RPC
/// framing, so runs exercise exactly the bytes a remote client would see.
pub struct InProcessClient {
    session: Session,
    next_id: i64,
}

impl InProcessClient {
    pub fn connect(server: &McpServer) -> Result<Self, ClientError> {
        let mut client = Self { session: server.session(), next_id: 0 };
        client.handshake()?;
        Ok(client)
    }
}

impl FrameTransport for InProcessClient {
    fn next_id(&mut self) -> i64 {
        self.next_id += 1;
        self.next_id
    }

    fn exchange(&mut self, frame: String) -> Result<Option<String>, ClientError> {
        Ok(self.session.handle_frame(&frame))
    }
}

impl ToolClient for InProcessClient {
    fn list_tools(&mut self) -> Result<Vec<ToolDescriptor>, ClientError> {
        self.list()
    }

    fn call_tool(&mut self, call: &ToolCall) -> Result<ToolResult, ClientError> {
        self.call(call)
    }
}

/// Blocking client for the `POST /rpc` endpoint. Must not be used from
/// inside an async runtime.
pub struct HttpClient {
    url: String,
    http: reqwest::blocking::Client,
    next_id: i64,
}

impl HttpClient {
    pub fn connect(url: impl Into<String>) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let mut client = Self { url: url.into(), http, next_id: 0 };
        client.handshake()?;
        Ok(client)
    }
}

impl FrameTransport for HttpClient {
    fn next_id(&mut self) -> i64 {
        self.next_id += 1;
        self.next_id
    }

    fn exchange(&mut self, frame: String) -> Result<Option<String>, ClientError> {
        let resp = self
            .http
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(frame)
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        if status == reqwest::StatusCode::ACCEPTED {
            return Ok(None);
        }
        if !status.is_success() {
            return Err(ClientError::Transport(format!("HTTP {status}")));
        }
        resp.text().map(Some).map_err(|e| ClientError::Transport(e.to_string()))
    }
}

impl ToolClient for HttpClient {
    fn list_tools(&mut self) -> Result<Vec<ToolDescriptor>, ClientError> {
        self.list()
    }

    fn call_tool(&mut self, call: &ToolCall) -> Result<ToolResult, ClientError> {
        self.call(call)
    }
}
