#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;

use ehr_mcp::clinical_tools::ClinicalTools;
use ehr_mcp::mcp::{serve_http, serve_stdio, McpServer};
use ehr_mcp::warehouse::{generate_cohort, Cohort};
use tokio::sync::oneshot;

pub fn cohort42() -> Cohort {
    generate_cohort(42, 8).unwrap()
}

pub fn server_for(cohort: &Cohort) -> McpServer {
    McpServer::new(ClinicalTools::new(Arc::new(cohort.warehouse.clone())))
}

/// An HTTP server on an ephemeral port, stopped when dropped.
pub struct HttpServer {
    pub url: String,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<thread::JoinHandle<()>>,
}

impl HttpServer {
    pub fn start(server: McpServer) -> Self {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop, stopped) = oneshot::channel::<()>();
        let handle = thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                serve_http(server, listener, async {
                    let _ = stopped.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self { url: format!("http://{addr}/rpc"), stop: Some(stop), handle: Some(handle) }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn requests() -> String {
    fs::read_to_string(golden("session.requests.ndjson")).unwrap()
}

pub fn stdio_replay(server: &McpServer) -> String {
    let mut out = Vec::new();
    serve_stdio(server, requests().as_bytes(), &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

/// Posts each request line on its own; notifications (202) produce no line.
pub fn http_replay(url: &str) -> String {
    let http = reqwest::blocking::Client::new();
    let mut out = String::new();
    for line in requests().lines() {
        let resp = http.post(url).header("content-type", "application/json").body(line.to_owned()).send().unwrap();
        if resp.status() == reqwest::StatusCode::ACCEPTED {
            continue;
        }
        assert!(resp.status().is_success(), "{line}: {}", resp.status());
        out.push_str(&resp.text().unwrap());
        out.push('\n');
    }
    out
}
