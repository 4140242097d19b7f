#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use negotiator_service::server::{router, AppState, Shared};
use serde_json::Value;
use tower::ServiceExt;

pub fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn config(name: &str) -> Value {
    let text = std::fs::read_to_string(configs().join(format!("{name}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// The W1 domain with a human H facing `p`.
pub fn w1_human(p: Value) -> Value {
    let mut c = config("w1");
    c["session"]["strategies"] = serde_json::json!({ "H": { "kind": "human" }, "P": p });
    c["session"]["estimation"] = "declared".into();
    c["session"]["estimated_profile_P"] = c["session"]["true_profile_P"].clone();
    c["reflection"] = serde_json::json!({ "enabled": true });
    c
}

/// The side-job scenario with H played over the API.
pub fn scenario_human() -> Value {
    let mut c = config("scenario");
    c["session"]["strategies"]["H"] = serde_json::json!({ "kind": "human" });
    c["reflection"] = serde_json::json!({ "enabled": true });
    c
}

pub fn app(data: &Path) -> (Router, Shared) {
    app_with_timeout(data, None)
}

pub fn app_with_timeout(data: &Path, timeout: Option<Duration>) -> (Router, Shared) {
    let state = AppState::open(data, timeout).unwrap();
    (router(state.clone()), state)
}

pub async fn call_raw(app: &Router, method: Method, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let text = body.map(|b| b.to_string()).unwrap_or_default();
    call_raw(app, method, uri, &text).await
}

pub async fn create(app: &Router, config: Value) -> String {
    let (status, body) = call(app, Method::POST, "/sessions", Some(config)).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

pub async fn view(app: &Router, id: &str) -> Value {
    let (status, body) = call(app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body
}

pub async fn act(app: &Router, id: &str, party: &str, action: Value) -> (StatusCode, Value) {
    call(
        app,
        Method::POST,
        &format!("/sessions/{id}/actions"),
        Some(serde_json::json!({ "party": party, "action": action })),
    )
    .await
}

pub fn offer(price: &str, delivery: &str) -> Value {
    serde_json::json!({ "offer": { "price": price, "delivery": delivery } })
}
