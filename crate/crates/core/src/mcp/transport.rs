use std::future::Future;
use std::io::{self, BufRead, Write};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use tokio::net::TcpListener;

use super::McpServer;

pub const MAX_BODY_BYTES: usize = 1024 * 1024;

/// Serves one session over newline-delimited JSON until `input` closes.
pub fn serve_stdio(server: &McpServer, input: impl BufRead, mut output: impl Write) -> io::Result<()> {
    let mut session = server.session();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(reply) = session.handle_frame(&line) {
            output.write_all(reply.as_bytes())?;
            output.write_all(b"\n")?;
            output.flush()?;
        }
    }
    Ok(())
}

/// `POST /rpc`, one JSON-RPC message per request. Every request is handled by
/// its own already-initialized session.
pub fn http_router(server: McpServer) -> Router {
    Router::new().route("/rpc", post(rpc)).layer(DefaultBodyLimit::max(MAX_BODY_BYTES)).with_state(server)
}

async fn rpc(State(server): State<McpServer>, body: Bytes) -> Response {
    let text = String::from_utf8_lossy(&body);
    match server.stateless_session().handle_frame(&text) {
        Some(reply) => ([(header::CONTENT_TYPE, "application/json")], reply).into_response(),
        None => StatusCode::ACCEPTED.into_response(),
    }
}

pub async fn serve_http(
    server: McpServer,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, http_router(server)).with_graceful_shutdown(shutdown).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clinical_tools::ClinicalTools;
    use crate::warehouse::Warehouse;
    use std::sync::Arc;

    #[test]
    fn stdio_answers_malformed_lines_and_continues() {
        let server = McpServer::new(ClinicalTools::new(Arc::new(Warehouse::empty())));
        let input = b"not json\n\n{\"jsonrpc\":\"2.0\",\"id\":7,\"method\":\"initialize\"}\n{\"jsonrpc\":\"2.0\",\"method\":\"notifications/initialized\"}\n";
        let mut out = Vec::new();
        serve_stdio(&server, &input[..], &mut out).unwrap();
        let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].contains("-32700"));
        assert!(lines[1].starts_with(r#"{"jsonrpc":"2.0","id":7,"result""#));
    }
}
