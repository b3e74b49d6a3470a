//! OpenAI-compatible chat-completions policy.

use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{AgentContext, Decision, Policy, DEFAULT_MAX_STEPS};
use crate::mcp::{ToolCall, ToolDescriptor};

const RETRIES: u32 = 3;

fn default_temperature() -> f64 {
    1.0
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

impl ProviderConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        let config: Self =
            serde_json::from_str(&text).map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        if config.max_steps == 0 {
            return Err(ProviderError::Config("max_steps must be at least 1".into()));
        }
        Ok(config)
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider config: {0}")]
    Config(String),
    #[error("environment variable {0} is not set")]
    MissingCredential(String),
}

/// Stateful per run: keeps the message list so tool-call ids returned by the
/// model can be echoed with their results.
pub struct ChatPolicy {
    config: ProviderConfig,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
    backoff: Duration,
    messages: Vec<Value>,
    pending_ids: Vec<String>,
    consumed: usize,
}

impl ChatPolicy {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ProviderError::MissingCredential(var.clone()))?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self {
            config,
            http,
            api_key,
            backoff: Duration::from_millis(500),
            messages: Vec::new(),
            pending_ids: Vec::new(),
            consumed: 0,
        })
    }

    /// Base delay before the first retry; doubles on each further retry.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn tool_schemas(tools: &[ToolDescriptor]) -> Vec<Value> {
        tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {"name": t.name, "description": t.description, "parameters": t.input_schema},
                })
            })
            .collect()
    }

    fn post(&self, body: &Value) -> Result<Value, String> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut last_error = String::new();
        for attempt in 0..=RETRIES {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let mut req = self.http.post(&url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json::<Value>().map_err(|e| format!("invalid provider response: {e}"));
                }
                Ok(resp) => {
                    let status = resp.status();
                    last_error = format!("provider returned HTTP {status}");
                    if !(status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS) {
                        return Err(last_error);
                    }
                }
                Err(e) => last_error = format!("provider transport error: {e}"),
            }
            tracing::warn!(attempt, error = %last_error, "chat completion failed");
        }
        Err(format!("{last_error} (after {RETRIES} retries)"))
    }
}

impl Policy for ChatPolicy {
    fn decide(&mut self, ctx: &AgentContext<'_>) -> Decision {
        if self.messages.is_empty() {
            self.messages.push(json!({"role": "user", "content": ctx.prompt}));
        }
        for (k, step) in ctx.history[self.consumed..].iter().enumerate() {
            let id = self.pending_ids.get(k).cloned().unwrap_or_else(|| format!("call_{}", self.consumed + k));
            self.messages.push(json!({"role": "tool", "tool_call_id": id, "content": step.result_text}));
        }
        self.consumed = ctx.history.len();

        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": self.messages,
            "tools": Self::tool_schemas(ctx.tools),
        });
        let response = match self.post(&body) {
            Ok(r) => r,
            Err(e) => return Decision::ProviderError(e),
        };
        let message = &response["choices"][0]["message"];
        if let Some(calls) = message["tool_calls"].as_array().filter(|c| !c.is_empty()) {
            self.pending_ids = calls.iter().map(|c| c["id"].as_str().unwrap_or_default().to_owned()).collect();
            let decoded = calls
                .iter()
                .map(|c| {
                    let raw = c["function"]["arguments"].as_str().unwrap_or("{}");
                    ToolCall {
                        name: c["function"]["name"].as_str().unwrap_or_default().to_owned(),
                        arguments: serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned())),
                    }
                })
                .collect();
            self.messages.push(message.clone());
            return Decision::CallTools(decoded);
        }
        match message["content"].as_str() {
            Some(text) => Decision::Final(text.to_owned()),
            None => Decision::ProviderError("provider response has neither tool calls nor content".into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults() {
        let c: ProviderConfig = serde_json::from_str(r#"{"base_url": "http://x", "model": "m"}"#).unwrap();
        assert_eq!(c.temperature, 1.0);
        assert_eq!(c.max_steps, 10);
        assert!(serde_json::from_str::<ProviderConfig>(r#"{"base_url": "x", "model": "m", "api_key": "sk"}"#).is_err());
    }

    #[test]
    fn missing_credential_variable() {
        let c = ProviderConfig {
            base_url: "http://127.0.0.1:9".into(),
            model: "m".into(),
            api_key_env: Some("EHR_MCP_TEST_UNSET_VARIABLE".into()),
            temperature: 1.0,
            max_steps: 10,
        };
        assert!(matches!(ChatPolicy::new(c), Err(ProviderError::MissingCredential(_))));
    }
}
