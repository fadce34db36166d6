//! HTTP surface of the service.
//!
//! | method | path                               | success |
//! |--------|------------------------------------|---------|
//! | POST   | `/repos/{repo_id}/events`          | 202     |
//! | GET    | `/repos/{repo_id}/notifications`   | 200     |
//! | POST   | `/notifications/{id}/feedback`     | 200     |
//! | POST   | `/notifications/{id}/interactions` | 200     |
//! | GET    | `/repos/{repo_id}/telemetry`       | 200     |
//!
//! Validation errors map to 400, unknown notifications to 404, and
//! sequencing errors or forbidden feedback transitions to 409.

#![allow(clippy::result_large_err)]

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use super::state::{Feedback, InteractionElement, StateError};
use super::{Service, ServiceError, StoreError};
use crate::event::{parse_timestamp, validate_event};

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/repos/{repo_id}/events", post(post_event))
        .route("/repos/{repo_id}/notifications", get(list_notifications))
        .route("/repos/{repo_id}/telemetry", get(telemetry))
        .route("/notifications/{id}/feedback", post(post_feedback))
        .route("/notifications/{id}/interactions", post(post_interaction))
        .with_state(service)
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

fn service_error(e: ServiceError) -> Response {
    let status = match &e {
        ServiceError::Validation(_) | ServiceError::InvalidRepo(_) => StatusCode::BAD_REQUEST,
        ServiceError::Store(StoreError::State(state)) => match state {
            StateError::Sequencing(_) | StateError::InvalidTransition { .. } => StatusCode::CONFLICT,
            StateError::NotFound(_) => StatusCode::NOT_FOUND,
            StateError::InvalidVerdict(_) | StateError::InvalidElement(_) => StatusCode::BAD_REQUEST,
        },
        ServiceError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(status, e)
}

fn parse_body(body: &Bytes) -> Result<Value, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, format!("invalid JSON: {e}")))
}

async fn blocking<T, F>(f: F) -> Result<T, Response>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(result) => result.map_err(service_error),
        Err(join) => Err(error(StatusCode::INTERNAL_SERVER_ERROR, join)),
    }
}

async fn post_event(State(svc): State<Arc<Service>>, Path(repo_id): Path<String>, body: Bytes) -> Response {
    let raw = match parse_body(&body) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let event = match validate_event(&raw) {
        Ok(e) => e,
        Err(e) => return service_error(e.into()),
    };
    if event.repo_id != repo_id {
        return error(
            StatusCode::BAD_REQUEST,
            format!("event repo_id `{}` does not match path `{repo_id}`", event.repo_id),
        );
    }
    match blocking(move || svc.ingest(event)).await {
        Ok(notifications) => (StatusCode::ACCEPTED, Json(json!({ "notifications": notifications }))).into_response(),
        Err(r) => r,
    }
}

async fn list_notifications(
    State(svc): State<Arc<Service>>,
    Path(repo_id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let since = match params.get("since").map(|s| parse_timestamp(s)) {
        None => None,
        Some(Ok(t)) => Some(t),
        Some(Err(e)) => return error(StatusCode::BAD_REQUEST, e),
    };
    Json(svc.notifications(&repo_id, since)).into_response()
}

async fn telemetry(State(svc): State<Arc<Service>>, Path(repo_id): Path<String>) -> Response {
    match svc.telemetry(&repo_id) {
        Some(report) => Json(report).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown repository `{repo_id}`")),
    }
}

fn string_field<'a>(body: &'a Value, field: &str) -> Result<&'a str, Response> {
    body.get(field)
        .and_then(Value::as_str)
        .ok_or_else(|| error(StatusCode::BAD_REQUEST, format!("missing string field `{field}`")))
}

async fn post_feedback(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> Response {
    let verdict: Feedback = match parse_body(&body)
        .and_then(|b| string_field(&b, "verdict").map(str::to_string))
        .and_then(|v| v.parse().map_err(|e: StateError| service_error(e.into())))
    {
        Ok(v) => v,
        Err(r) => return r,
    };
    match blocking(move || svc.record_feedback(&id, verdict)).await {
        Ok(n) => Json(n).into_response(),
        Err(r) => r,
    }
}

async fn post_interaction(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> Response {
    let element: InteractionElement = match parse_body(&body)
        .and_then(|b| string_field(&b, "element").map(str::to_string))
        .and_then(|v| v.parse().map_err(|e: StateError| service_error(e.into())))
    {
        Ok(v) => v,
        Err(r) => return r,
    };
    let id2 = id.clone();
    match blocking(move || svc.record_interaction(&id2, element)).await {
        Ok(count) => Json(json!({ "id": id, "element": element, "count": count })).into_response(),
        Err(r) => r,
    }
}

/// Serves until ctrl-c, then snapshots every repository.
pub async fn serve(service: Arc<Service>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let app = router(service.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Err(e) = service.snapshot_all() {
        tracing::error!("final snapshot failed: {e}");
    }
    Ok(())
}
