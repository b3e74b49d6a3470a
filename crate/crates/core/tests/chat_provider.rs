mod common;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use ehr_mcp::agent::{run_react, ChatPolicy, ProviderConfig, Termination};
use ehr_mcp::mcp::InProcessClient;
use serde_json::{json, Value};
use tokio::sync::oneshot;

use common::{cohort42, server_for};

type Script = Arc<Mutex<(VecDeque<(StatusCode, Value)>, Vec<Value>)>>;

/// Chat endpoint that replays canned responses and records request bodies.
struct MockChat {
    base_url: String,
    script: Script,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<thread::JoinHandle<()>>,
}

async fn completions(State(script): State<Script>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let mut s = script.lock().unwrap();
    s.1.push(body);
    let (status, reply) = s.0.pop_front().unwrap_or((StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "exhausted"})));
    (status, Json(reply))
}

impl MockChat {
    fn start(replies: Vec<(StatusCode, Value)>) -> Self {
        let script: Script = Arc::new(Mutex::new((replies.into(), Vec::new())));
        let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(script.clone());
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop, stopped) = oneshot::channel::<()>();
        let handle = thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stopped.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self { base_url: format!("http://{addr}/v1"), script, stop: Some(stop), handle: Some(handle) }
    }

    fn requests(&self) -> Vec<Value> {
        self.script.lock().unwrap().1.clone()
    }

    fn policy(&self) -> ChatPolicy {
        let config = ProviderConfig {
            base_url: self.base_url.clone(),
            model: "mock-model".into(),
            api_key_env: None,
            temperature: 1.0,
            max_steps: 10,
        };
        ChatPolicy::new(config).unwrap().with_backoff(Duration::from_millis(1))
    }
}

impl Drop for MockChat {
    fn drop(&mut self) {
        let _ = self.stop.take().map(|s| s.send(()));
        let _ = self.handle.take().map(|h| h.join());
    }
}

fn tool_call_reply(name: &str, args: Value) -> (StatusCode, Value) {
    let message = json!({
        "role": "assistant",
        "content": null,
        "tool_calls": [{"id": "call_abc", "type": "function", "function": {"name": name, "arguments": args.to_string()}}],
    });
    (StatusCode::OK, json!({"choices": [{"message": message}]}))
}

fn text_reply(text: &str) -> (StatusCode, Value) {
    (StatusCode::OK, json!({"choices": [{"message": {"role": "assistant", "content": text}}]}))
}

fn run(mock: &MockChat, prompt: &str) -> ehr_mcp::agent::Transcript {
    let server = server_for(&cohort42());
    let mut client = InProcessClient::connect(&server).unwrap();
    run_react(prompt, &mut client, &mut mock.policy(), 10)
}

#[test]
fn tool_call_then_final_text() {
    let mock = MockChat::start(vec![
        tool_call_reply("patient_basic_info", json!({"patient_id": "P001"})),
        text_reply(r#"{"weight": 70.1}"#),
    ]);
    let t = run(&mock, "weight of P001?");
    assert_eq!(t.terminated_by, Termination::FinalAnswer);
    assert_eq!(t.steps.len(), 1);
    assert_eq!(t.steps[0].tool_name, "patient_basic_info");
    assert!(!t.steps[0].is_error);
    assert_eq!(t.final_response.as_deref(), Some(r#"{"weight": 70.1}"#));

    let requests = mock.requests();
    assert_eq!(requests.len(), 2);
    assert_eq!(requests[0]["model"], "mock-model");
    assert_eq!(requests[0]["tools"].as_array().unwrap().len(), 5);
    let second = requests[1]["messages"].as_array().unwrap();
    let tool_msg = second.last().unwrap();
    assert_eq!(tool_msg["role"], "tool");
    assert_eq!(tool_msg["tool_call_id"], "call_abc");
    assert_eq!(tool_msg["content"], t.steps[0].result_text.as_str());
}

#[test]
fn final_text_without_tools() {
    let mock = MockChat::start(vec![text_reply("done")]);
    let t = run(&mock, "hi");
    assert_eq!(t.terminated_by, Termination::FinalAnswer);
    assert!(t.steps.is_empty());
}

#[test]
fn four_server_errors_end_in_provider_error() {
    let err = (StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "boom"}));
    let mock = MockChat::start(vec![err.clone(), err.clone(), err.clone(), err, text_reply("never")]);
    let t = run(&mock, "hi");
    assert_eq!(t.terminated_by, Termination::ProviderError);
    assert!(t.provider_error.as_deref().unwrap().contains("500"), "{:?}", t.provider_error);
    assert!(t.final_response.is_none());
    assert_eq!(mock.requests().len(), 4);
}

#[test]
fn transient_errors_are_retried() {
    let mock = MockChat::start(vec![
        (StatusCode::TOO_MANY_REQUESTS, json!({})),
        (StatusCode::BAD_GATEWAY, json!({})),
        (StatusCode::SERVICE_UNAVAILABLE, json!({})),
        text_reply("ok"),
    ]);
    let t = run(&mock, "hi");
    assert_eq!(t.terminated_by, Termination::FinalAnswer);
    assert_eq!(mock.requests().len(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let mock = MockChat::start(vec![(StatusCode::UNAUTHORIZED, json!({})), text_reply("never")]);
    let t = run(&mock, "hi");
    assert_eq!(t.terminated_by, Termination::ProviderError);
    assert_eq!(mock.requests().len(), 1);
}
