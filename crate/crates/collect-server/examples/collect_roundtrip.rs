//! Replays one synthetic session through the HTTP API the way the browser
//! collector would, then reads the stored file back with the ingest parser.
//!
//! cargo run -p pinlogger-collect --example collect_roundtrip [data_dir]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use pinlogger::ingest::{parse_session, KeyRecord, SampleRecord};
use pinlogger::model::validate_trace;
use pinlogger::synth::{gen_session, SynthConfig};
use pinlogger_collect::{router, ServerConfig, SessionStore};

async fn post(app: &axum::Router, uri: &str, body: Value, verbose: bool) -> Value {
    let req = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value: Value = serde_json::from_slice(&bytes).unwrap();
    if verbose || !status.is_success() {
        println!("POST {uri} -> {status} {value}");
    }
    value
}

#[tokio::main]
async fn main() {
    env_logger::init();
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("pinlogger-collect-demo"));
    let store = Arc::new(SessionStore::open(&dir).expect("open data dir"));
    let app = router(store.clone(), &ServerConfig::default()).expect("router");

    let cfg = SynthConfig::default();
    let session = gen_session(&cfg, 0, 0, &cfg.pin_list()).expect("synthetic session");
    let id = post(&app, "/v1/sessions", json!({"user": session.meta.user_id, "device": "synthetic"}), true).await["id"]
        .as_str()
        .unwrap()
        .to_string();

    // One batch per second of samples, as a collector flushing once a second.
    let mut accepted = 0;
    for chunk in session.trace.samples.chunks(60) {
        let samples: Vec<SampleRecord> = chunk.iter().map(SampleRecord::from).collect();
        let uri = format!("/v1/sessions/{id}/samples");
        accepted += post(&app, &uri, json!({ "samples": samples }), accepted < 180).await["accepted"]
            .as_u64()
            .unwrap_or(0);
    }
    println!("... {accepted} samples accepted");
    let events: Vec<KeyRecord> = session.events.iter().map(KeyRecord::from).collect();
    post(&app, &format!("/v1/sessions/{id}/events"), json!({ "events": events }), true).await;
    post(&app, &format!("/v1/sessions/{id}/close"), json!({}), true).await;

    let path = store.path_of(&id);
    let parsed = parse_session(&std::fs::read(&path).unwrap()).expect("stored file parses");
    let identical = parsed.trace.samples == session.trace.samples && parsed.events == session.events;
    println!(
        "{}: {} samples, {} key events, {} violations, identical to generated: {identical}",
        path.display(),
        parsed.trace.samples.len(),
        parsed.events.len(),
        validate_trace(&parsed.trace).len()
    );
}
