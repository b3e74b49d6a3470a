//! ReAct loop: the policy decides, the MCP client executes, observations are
//! appended verbatim, until a final answer or a limit.

mod faults;
mod observe;
mod oracle;
mod provider;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::mcp::{ToolCall, ToolClient, ToolDescriptor};

pub use faults::FaultInjector;
pub use oracle::ScriptedOracle;
pub use provider::{ChatPolicy, ProviderConfig, ProviderError};

pub const DEFAULT_MAX_STEPS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Index of the policy decision that issued this call.
    pub turn: usize,
    pub tool_name: String,
    pub arguments: Value,
    pub result_text: String,
    pub is_error: bool,
}

impl Step {
    pub fn call(&self) -> ToolCall {
        ToolCall { name: self.tool_name.clone(), arguments: self.arguments.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FinalAnswer,
    StepLimit,
    ProviderError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub initial_prompt: String,
    pub steps: Vec<Step>,
    /// Present iff `terminated_by` is `FinalAnswer`.
    pub final_response: Option<String>,
    pub step_count: usize,
    pub terminated_by: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    CallTools(Vec<ToolCall>),
    Final(String),
    ProviderError(String),
}

pub struct AgentContext<'a> {
    pub prompt: &'a str,
    pub tools: &'a [ToolDescriptor],
    pub history: &'a [Step],
}

pub trait Policy {
    fn decide(&mut self, ctx: &AgentContext<'_>) -> Decision;
}

/// Runs one episode. `max_steps` caps the number of executed tool calls.
pub fn run_react(prompt: &str, client: &mut dyn ToolClient, policy: &mut dyn Policy, max_steps: usize) -> Transcript {
    let mut transcript = Transcript {
        initial_prompt: prompt.to_owned(),
        steps: Vec::new(),
        final_response: None,
        step_count: 0,
        terminated_by: Termination::StepLimit,
        provider_error: None,
    };
    let tools = match client.list_tools() {
        Ok(t) => t,
        Err(e) => {
            transcript.terminated_by = Termination::ProviderError;
            transcript.provider_error = Some(format!("tools/list failed: {e}"));
            return transcript;
        }
    };
    let mut turn = 0;
    loop {
        let decision = policy.decide(&AgentContext { prompt, tools: &tools, history: &transcript.steps });
        match decision {
            Decision::Final(text) => {
                transcript.final_response = Some(text);
                transcript.terminated_by = Termination::FinalAnswer;
                break;
            }
            Decision::ProviderError(msg) => {
                transcript.terminated_by = Termination::ProviderError;
                transcript.provider_error = Some(msg);
                break;
            }
            Decision::CallTools(calls) if calls.is_empty() => {
                transcript.terminated_by = Termination::ProviderError;
                transcript.provider_error = Some("policy returned neither tool calls nor an answer".into());
                break;
            }
            Decision::CallTools(calls) => {
                for call in calls {
                    if transcript.steps.len() >= max_steps {
                        transcript.terminated_by = Termination::StepLimit;
                        transcript.step_count = transcript.steps.len();
                        return transcript;
                    }
                    let (result_text, is_error) = match client.call_tool(&call) {
                        Ok(r) => (r.text, r.is_error),
                        Err(e) => (format!("Error: {e}"), true),
                    };
                    transcript.steps.push(Step {
                        turn,
                        tool_name: call.name,
                        arguments: call.arguments,
                        result_text,
                        is_error,
                    });
                }
            }
        }
        turn += 1;
    }
    transcript.step_count = transcript.steps.len();
    transcript
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clinical_tools::ClinicalTools;
    use crate::mcp::{InProcessClient, McpServer};
    use crate::warehouse::Warehouse;
    use serde_json::json;
    use std::sync::Arc;

    struct Chatterbox;

    impl Policy for Chatterbox {
        fn decide(&mut self, _: &AgentContext<'_>) -> Decision {
            Decision::CallTools(vec![ToolCall {
                name: "patient_basic_info".into(),
                arguments: json!({"patient_id": "P1"}),
            }])
        }
    }

    #[test]
    fn never_answering_hits_step_limit() {
        let server = McpServer::new(ClinicalTools::new(Arc::new(Warehouse::empty())));
        let mut client = InProcessClient::connect(&server).unwrap();
        let t = run_react("p", &mut client, &mut Chatterbox, 4);
        assert_eq!(t.terminated_by, Termination::StepLimit);
        assert_eq!(t.step_count, 4);
        assert!(t.final_response.is_none());
        assert!(t.steps.iter().all(|s| s.is_error && s.result_text.contains("unknown patient_id: P1")));
    }
}
