//! The endpoint client against a local stand-in for a chat-completions server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use multistrat::backends::{record_session, Backoff, EndpointBackend, ReplayBackend};
use multistrat_core::backend::{BackendError, BackendKind, BackendProfile, ChatBackend, ChatMessage};
use serde_json::{json, Value};

/// Body and authorization header of the last request.
type Seen = Arc<Mutex<Option<(Value, Option<String>)>>>;

#[derive(Clone, Default)]
struct Stub {
    /// Status codes to return before the first success.
    failures: Arc<Mutex<Vec<u16>>>,
    hits: Arc<AtomicUsize>,
    last: Seen,
}

async fn completions(State(stub): State<Stub>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    stub.hits.fetch_add(1, Ordering::SeqCst);
    let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
    *stub.last.lock().unwrap() = Some((body.clone(), auth));
    let next = {
        let mut f = stub.failures.lock().unwrap();
        (!f.is_empty()).then(|| f.remove(0))
    };
    if let Some(code) = next {
        return (StatusCode::from_u16(code).unwrap(), Json(json!({"error": "busy"})));
    }
    let said = body["messages"].as_array().unwrap().last().unwrap()["content"].as_str().unwrap().to_uppercase();
    (StatusCode::OK, Json(json!({"choices": [{"message": {"role": "assistant", "content": said}}]})))
}

fn serve(stub: Stub) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(stub);
            axum::serve(tokio::net::TcpListener::from_std(listener).unwrap(), app).await.unwrap();
        });
    });
    format!("http://{addr}/v1")
}

fn profile(base_url: String, retries: u32) -> BackendProfile {
    BackendProfile {
        kind: BackendKind::Endpoint,
        base_url: Some(base_url),
        model_name: "tiny-chat".into(),
        temperature: 0.0,
        max_output_tokens: 64,
        timeout: 10,
        retries,
        seed: Some(5),
        api_key_env: None,
        script: None,
        tape: None,
        forward: None,
        resample: None,
    }
}

fn fast() -> Backoff {
    Backoff {
        base: Duration::from_millis(5),
        cap: Duration::from_millis(20),
    }
}

fn msgs() -> Vec<ChatMessage> {
    vec![ChatMessage::user("hello there")]
}

#[test]
fn transient_failures_are_retried() {
    let stub = Stub::default();
    *stub.failures.lock().unwrap() = vec![503, 429];
    let backend = EndpointBackend::from_profile(&profile(serve(stub.clone()), 3)).unwrap().with_backoff(fast());
    assert_eq!(backend.complete(&msgs(), 0).unwrap(), "HELLO THERE");
    assert_eq!(backend.attempts(), 3);
    let (body, auth) = stub.last.lock().unwrap().clone().unwrap();
    assert_eq!(body["model"], "tiny-chat");
    assert_eq!(body["seed"], 5);
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(body["messages"][0]["role"], "user");
    assert!(auth.is_none());
}

#[test]
fn retries_run_out() {
    let stub = Stub::default();
    *stub.failures.lock().unwrap() = vec![500; 5];
    let backend = EndpointBackend::from_profile(&profile(serve(stub.clone()), 2)).unwrap().with_backoff(fast());
    match backend.complete(&msgs(), 0) {
        Err(BackendError::Transport { attempts: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(stub.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = Stub::default();
    *stub.failures.lock().unwrap() = vec![400];
    let backend = EndpointBackend::from_profile(&profile(serve(stub.clone()), 4)).unwrap().with_backoff(fast());
    assert!(matches!(backend.complete(&msgs(), 0), Err(BackendError::Transport { attempts: 1, .. })));
    assert_eq!(stub.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn api_key_comes_from_the_environment() {
    let stub = Stub::default();
    let mut p = profile(serve(stub.clone()), 0);
    p.api_key_env = Some("MULTISTRAT_TEST_KEY_UNSET".into());
    assert!(matches!(EndpointBackend::from_profile(&p), Err(BackendError::Config(_))));
    p.api_key_env = Some("MULTISTRAT_TEST_KEY".into());
    // Only this test touches the variable.
    unsafe { std::env::set_var("MULTISTRAT_TEST_KEY", "sk-local") };
    EndpointBackend::from_profile(&p).unwrap().complete(&msgs(), 0).unwrap();
    assert_eq!(stub.last.lock().unwrap().clone().unwrap().1.as_deref(), Some("Bearer sk-local"));
}

#[test]
fn recorded_sessions_replay_offline() {
    let stub = Stub::default();
    let dir = tempfile::tempdir().unwrap();
    let tape = dir.path().join("tape.jsonl");
    let live = EndpointBackend::from_profile(&profile(serve(stub.clone()), 0)).unwrap();
    let recorder = record_session(Box::new(live), &tape).unwrap();
    let a = recorder.complete(&msgs(), 0).unwrap();
    let b = recorder.complete(&[ChatMessage::user("again")], 1).unwrap();
    assert_eq!(recorder.complete(&msgs(), 0).unwrap(), a);
    assert_eq!(stub.hits.load(Ordering::SeqCst), 2);

    let replay = ReplayBackend::open(&tape, None).unwrap();
    assert_eq!(replay.len(), 2);
    assert_eq!(replay.complete(&msgs(), 0).unwrap(), a);
    assert_eq!(replay.complete(&[ChatMessage::user("again")], 1).unwrap(), b);
    assert!(matches!(replay.complete(&msgs(), 7), Err(BackendError::Fixture { .. })));
}
