//! HTTP reward service.
//!
//! `POST /v1/score` takes one reward request, `POST /v1/score/batch` a JSON
//! list of them, and `GET /health` reports the build. Bad request bodies get
//! a 400 naming the offending field; bad model output is just reward 0.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use multistrat_core::reward::{batch_to_wire_json, score, FieldError, RewardRequest, RewardResult};
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    field: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    index: Option<usize>,
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn bad_request(err: FieldError, index: Option<usize>) -> Response {
    let body = ErrorBody {
        error: err.message,
        field: err.field,
        index,
    };
    json(StatusCode::BAD_REQUEST, serde_json::to_string(&body).expect("error body serializes"))
}

/// Names the field a deserialization error is about. The path is used when
/// serde got inside a field; otherwise the backticked name in the message.
fn decode_error(err: serde_path_to_error::Error<serde_json::Error>) -> FieldError {
    let path = err.path().to_string();
    let message = err.inner().to_string();
    let field = if path != "." && !path.is_empty() {
        path
    } else {
        message
            .split('`')
            .nth(1)
            .filter(|_| message.contains("field `"))
            .unwrap_or("body")
            .to_string()
    };
    FieldError { field, message }
}

/// Decodes and scores one request body.
pub fn score_body(body: &[u8]) -> Result<RewardResult, FieldError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    let req: RewardRequest = serde_path_to_error::deserialize(de).map_err(decode_error)?;
    score(&req)
}

/// Decodes and scores a batch body; the error carries the failing index.
pub fn score_batch_body(body: &[u8]) -> Result<Vec<RewardResult>, (FieldError, Option<usize>)> {
    let items: Vec<serde_json::Value> = serde_json::from_slice(body).map_err(|e| {
        (
            FieldError {
                field: "body".into(),
                message: format!("expected a JSON list of requests: {e}"),
            },
            None,
        )
    })?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let req: RewardRequest = serde_path_to_error::deserialize(item).map_err(|e| (decode_error(e), Some(i)))?;
            score(&req).map_err(|e| (e, Some(i)))
        })
        .collect()
}

#[derive(Clone)]
struct AppState {
    permits: Arc<Semaphore>,
}

async fn health() -> Response {
    let body = serde_json::json!({
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
    });
    json(StatusCode::OK, body.to_string())
}

async fn score_one(State(state): State<AppState>, body: Bytes) -> Response {
    let _permit = state.permits.acquire().await.expect("semaphore open");
    match score_body(&body) {
        Ok(result) => json(StatusCode::OK, result.to_wire_json()),
        Err(e) => bad_request(e, None),
    }
}

async fn score_batch(State(state): State<AppState>, body: Bytes) -> Response {
    let _permit = state.permits.acquire().await.expect("semaphore open");
    match score_batch_body(&body) {
        Ok(results) => json(StatusCode::OK, batch_to_wire_json(&results)),
        Err((e, index)) => bad_request(e, index),
    }
}

/// The service routes, handling at most `concurrency` scoring requests at once.
pub fn router(concurrency: usize) -> Router {
    let state = AppState {
        permits: Arc::new(Semaphore::new(concurrency.max(1))),
    };
    Router::new()
        .route("/health", get(health))
        .route("/v1/score", post(score_one))
        .route("/v1/score/batch", post(score_batch))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    concurrency: usize,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(concurrency)).with_graceful_shutdown(shutdown).await
}

/// A service running on a background thread, stopped on drop.
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `bind` and serves from a background thread.
pub fn spawn(bind: &str, concurrency: usize) -> std::io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
    let listener = runtime.block_on(TcpListener::bind(bind))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(serve(listener, concurrency, async {
            let _ = rx.await;
        }))
    });
    Ok(ServerHandle {
        addr,
        stop: Some(tx),
        thread: Some(thread),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_ref_flag_is_named() {
        let err = score_body(br#"{"method":"obo","output":"x","ref_strategies":["Question"]}"#).unwrap_err();
        assert_eq!(err.field, "ref_flag");
    }

    #[test]
    fn decode_errors_name_fields() {
        let err = score_body(br#"{"method":"aio","ref_strategies":["Question"]}"#).unwrap_err();
        assert_eq!(err.field, "output");
        let err = score_body(br#"{"method":"aio","output":"x","ref_strategies":["Question"],"extra":1}"#).unwrap_err();
        assert_eq!(err.field, "extra");
        let err = score_body(br#"{"method":"aio","output":"x","ref_strategies":["Nope"]}"#).unwrap_err();
        assert!(err.field.starts_with("ref_strategies"), "{}", err.field);
        let err = score_body(b"not json").unwrap_err();
        assert_eq!(err.field, "body");
    }

    #[test]
    fn bad_output_scores_zero() {
        let r = score_body(br#"{"method":"aio","output":"prose","ref_strategies":["Question"]}"#).unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.format_ok, 0);
    }

    #[test]
    fn batch_reports_index() {
        let body = br#"[{"method":"aio","output":"x","ref_strategies":["Question"]},{"method":"obo","output":"x","ref_strategies":["Question"]}]"#;
        let (err, index) = score_batch_body(body).unwrap_err();
        assert_eq!((err.field.as_str(), index), ("ref_flag", Some(1)));
    }
}
