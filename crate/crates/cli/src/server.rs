//! Session API over HTTP.
//!
//! ```text
//! POST /sessions                -> 201 {"id", "created_at", "n_turns", "variant"}
//! POST /sessions/{id}/turns     -> 200 PipelineOutput
//! GET  /sessions/{id}/history   -> 200 {"id", "entries": [...]}
//! GET  /healthz                 -> 200 {"status", "model_loaded", "sessions"}
//! ```
//!
//! Failures return `{"error": {"kind", "message"}}` with a matching status.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::cors::CorsLayer;

use mesc_core::reasoning::{SessionError, TurnRequest};

use crate::session::{CreateSession, ManagerError, SessionManager};

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            kind: "bad_request",
            message: message.into(),
        }
    }
}

impl From<ManagerError> for ApiError {
    fn from(e: ManagerError) -> Self {
        let (status, kind) = match &e {
            ManagerError::NoModel => (StatusCode::SERVICE_UNAVAILABLE, "no_model"),
            ManagerError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            ManagerError::BadConfig(_) => (StatusCode::BAD_REQUEST, "bad_config"),
            ManagerError::Turn(SessionError::EmptyUtterance) => (StatusCode::BAD_REQUEST, "bad_request"),
            ManagerError::Turn(SessionError::Cue(_)) => (StatusCode::BAD_GATEWAY, "cue_backend"),
            ManagerError::Turn(_) => (StatusCode::INTERNAL_SERVER_ERROR, "generation"),
            ManagerError::Transcript(_) => (StatusCode::INTERNAL_SERVER_ERROR, "transcript"),
        };
        Self {
            status,
            kind,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"kind": self.kind, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

type Shared = Arc<SessionManager>;

pub fn router(manager: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info))
        .route("/sessions/{id}/turns", post(post_turn))
        .route("/sessions/{id}/history", get(history))
        .layer(CorsLayer::permissive())
        .with_state(manager)
}

async fn healthz(State(m): State<Shared>) -> impl IntoResponse {
    Json(json!({"status": "ok", "model_loaded": m.has_model(), "sessions": m.len()}))
}

async fn create_session(State(m): State<Shared>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let info = m.create(req)?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn session_info(State(m): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(m.info(&id)?))
}

async fn post_turn(State(m): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: TurnRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let out = tokio::task::spawn_blocking(move || m.post_turn(&id, &req))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            kind: "internal",
            message: e.to_string(),
        })??;
    Ok(Json(out))
}

async fn history(State(m): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let entries = m.history(&id)?;
    Ok(Json(json!({"id": id, "entries": entries})))
}

/// Serve until interrupted.
pub async fn serve(manager: Shared, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(manager))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
