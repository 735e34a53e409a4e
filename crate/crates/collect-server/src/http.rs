//! JSON-over-HTTP front end for [`SessionStore`].
//!
//! ```text
//! POST /v1/sessions               {user, device}  -> 201 {id}
//! POST /v1/sessions/{id}/samples  {samples: [..]} -> 200 {accepted}
//! POST /v1/sessions/{id}/events   {events: [..]}  -> 200 {accepted}
//! POST /v1/sessions/{id}/close                    -> 200 {session}
//! GET  /v1/sessions/{id}                          -> 200 {session}
//! GET  /v1/pins                                   -> 200 {seed, pins}
//! ```
//!
//! Sample and event objects use the session file line schemas without the
//! `k` tag. Errors are `{error, index?}` with 400 (malformed body), 404
//! (unknown session), 409 (closed session) or 422 (rejected item).

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use pinlogger::ingest::{KeyRecord, SampleRecord};
use pinlogger::pipeline::PinListFile;

use crate::store::{Session, SessionStore, StoreError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    /// `*` allows any origin.
    pub allowed_origin: String,
    /// Seed of the PIN list served at `/v1/pins`.
    pub pin_seed: u64,
    pub max_body_bytes: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("sessions"),
            allowed_origin: "*".to_string(),
            pin_seed: 0,
            max_body_bytes: 16 << 20,
        }
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<SessionStore>,
    pins: Arc<PinListFile>,
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub user: String,
    pub device: String,
}

#[derive(Debug, Deserialize)]
pub struct SamplesRequest {
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Deserialize)]
pub struct EventsRequest {
    pub events: Vec<KeyRecord>,
}

struct ApiError(StoreError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Closed(_) => StatusCode::CONFLICT,
            StoreError::OutOfOrder { .. } | StoreError::Invalid { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::BadRequest(_) => StatusCode::BAD_REQUEST,
            StoreError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        }
        let body = match self.0.index() {
            Some(i) => json!({ "error": self.0.to_string(), "index": i }),
            None => json!({ "error": self.0.to_string() }),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn body<T>(payload: std::result::Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError(StoreError::BadRequest(e.body_text())))
}

/// Runs a store call off the async workers; the store does blocking file IO.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionStore) -> Result<T, StoreError> + Send + 'static,
{
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .expect("store task panicked")
        .map_err(ApiError)
}

async fn create(
    State(state): State<AppState>,
    payload: std::result::Result<Json<CreateRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req = body(payload)?;
    let session = blocking(&state, move |s| s.create(&req.user, &req.device)).await?;
    log::info!("created session {} for {}", session.id, session.user);
    Ok((StatusCode::CREATED, Json(json!({ "id": session.id }))))
}

async fn samples(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: std::result::Result<Json<SamplesRequest>, JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let req = body(payload)?;
    let n = blocking(&state, move |s| s.append_samples(&id, &req.samples)).await?;
    Ok(Json(json!({ "accepted": n })))
}

async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: std::result::Result<Json<EventsRequest>, JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let req = body(payload)?;
    let n = blocking(&state, move |s| s.append_events(&id, &req.events)).await?;
    Ok(Json(json!({ "accepted": n })))
}

#[derive(Serialize)]
struct SessionBody {
    session: Session,
}

async fn close(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionBody>> {
    let session = blocking(&state, move |s| s.close(&id)).await?;
    Ok(Json(SessionBody { session }))
}

async fn show(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionBody>> {
    let session = blocking(&state, move |s| s.get(&id)).await?;
    Ok(Json(SessionBody { session }))
}

async fn pins(State(state): State<AppState>) -> Json<PinListFile> {
    Json((*state.pins).clone())
}

fn cors(origin: &str) -> Result<CorsLayer, String> {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    if origin == "*" {
        return Ok(layer.allow_origin(Any));
    }
    let value = HeaderValue::from_str(origin).map_err(|_| format!("invalid origin {origin:?}"))?;
    Ok(layer.allow_origin(AllowOrigin::exact(value)))
}

pub fn router(store: Arc<SessionStore>, cfg: &ServerConfig) -> Result<Router, String> {
    let state = AppState {
        store,
        pins: Arc::new(PinListFile::generate(cfg.pin_seed)),
    };
    Ok(Router::new()
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/{id}", get(show))
        .route("/v1/sessions/{id}/samples", post(samples))
        .route("/v1/sessions/{id}/events", post(events))
        .route("/v1/sessions/{id}/close", post(close))
        .route("/v1/pins", get(pins))
        .layer(DefaultBodyLimit::max(cfg.max_body_bytes))
        .layer(cors(&cfg.allowed_origin)?)
        .with_state(state))
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("server failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Binds and serves until Ctrl-C.
pub async fn serve(cfg: ServerConfig) -> Result<(), ServeError> {
    let store = Arc::new(SessionStore::open(&cfg.data_dir)?);
    let app = router(store, &cfg).map_err(ServeError::Config)?;
    let listener = tokio::net::TcpListener::bind(cfg.bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
