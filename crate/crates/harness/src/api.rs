//! JSON-over-HTTP API consumed by the assessor client.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dialeval_core::types::TopicOpinion;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::service::{criteria, Service, ServiceError};
use crate::session::{SessionError, SessionView};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: &'static str,
    detail: String,
    count: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            error,
            detail: detail.into(),
            count: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.error, "detail": self.detail });
        if let Some(count) = self.count {
            body["count"] = json!(count);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::UnknownSession(_) => Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            ServiceError::Session(SessionError::NoSuchSlot(_)) => {
                Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string())
            }
            ServiceError::Session(SessionError::Conflict { code, detail, count }) => Self {
                status: StatusCode::CONFLICT,
                error: code,
                detail,
                count,
            },
            ServiceError::Session(SessionError::Invalid { code, detail }) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, detail)
            }
            ServiceError::InvalidWorker => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_worker", "worker_id must not be empty")
            }
            // the detail names neither system nor endpoint
            ServiceError::Adapter(_) => Self::new(
                StatusCode::BAD_GATEWAY,
                "reply_failed",
                "the chatbot did not respond; please try again",
            ),
            ServiceError::Degradation(_) | ServiceError::UnknownSystem(_) => Self::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "reply_failed",
                "the chatbot could not produce a reply",
            ),
            ServiceError::Log(_) | ServiceError::Hit(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "the request could not be recorded")
            }
        }
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", e.body_text()))
}

type Shared = State<Arc<Service>>;
type ViewResult = Result<Json<SessionView>, ApiError>;

#[derive(Debug, Deserialize)]
struct StartRequest {
    worker_id: String,
}

#[derive(Debug, Deserialize)]
struct TopicRequest {
    topic: String,
}

#[derive(Debug, Deserialize)]
struct MessageRequest {
    text: String,
}

#[derive(Debug, Serialize)]
struct MessageResponse {
    reply: String,
    user_inputs: usize,
}

#[derive(Debug, Deserialize)]
struct RatingsRequest {
    ratings: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
struct OpinionRequest {
    opinion: TopicOpinion,
}

#[derive(Debug, Deserialize)]
struct FeedbackRequest {
    #[serde(default)]
    text: String,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_criteria() -> Json<serde_json::Value> {
    Json(json!(criteria()
        .into_iter()
        .map(|(c, statement)| json!({ "name": c.name(), "statement": statement }))
        .collect::<Vec<_>>()))
}

async fn start(State(svc): Shared, payload: Result<Json<StartRequest>, JsonRejection>) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let req = body(payload)?;
    Ok((StatusCode::CREATED, Json(svc.start_session(&req.worker_id)?)))
}

async fn get_session(State(svc): Shared, Path(id): Path<String>) -> ViewResult {
    Ok(Json(svc.view(&id).await?))
}

async fn topic(
    State(svc): Shared,
    Path((id, slot)): Path<(String, usize)>,
    payload: Result<Json<TopicRequest>, JsonRejection>,
) -> ViewResult {
    let req = body(payload)?;
    Ok(Json(svc.topic(&id, slot, &req.topic).await?))
}

async fn message(
    State(svc): Shared,
    Path((id, slot)): Path<(String, usize)>,
    payload: Result<Json<MessageRequest>, JsonRejection>,
) -> Result<Json<MessageResponse>, ApiError> {
    let req = body(payload)?;
    let reply = svc.post_message(&id, slot, &req.text).await?;
    let view = svc.view(&id).await?;
    Ok(Json(MessageResponse {
        reply,
        user_inputs: view.slots[slot].user_inputs,
    }))
}

async fn complete(State(svc): Shared, Path((id, slot)): Path<(String, usize)>) -> ViewResult {
    Ok(Json(svc.complete(&id, slot).await?))
}

async fn ratings(
    State(svc): Shared,
    Path((id, slot)): Path<(String, usize)>,
    payload: Result<Json<RatingsRequest>, JsonRejection>,
) -> ViewResult {
    let req = body(payload)?;
    Ok(Json(svc.submit_ratings(&id, slot, &req.ratings).await?))
}

async fn opinion(
    State(svc): Shared,
    Path((id, slot)): Path<(String, usize)>,
    payload: Result<Json<OpinionRequest>, JsonRejection>,
) -> ViewResult {
    let req = body(payload)?;
    Ok(Json(svc.submit_opinion(&id, slot, req.opinion).await?))
}

async fn feedback(
    State(svc): Shared,
    Path(id): Path<String>,
    payload: Result<Json<FeedbackRequest>, JsonRejection>,
) -> ViewResult {
    let req = body(payload)?;
    Ok(Json(svc.submit_feedback(&id, &req.text).await?))
}

pub fn router(service: Arc<Service>) -> Router {
    let static_dir = service.config().static_dir.clone();
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/criteria", get(list_criteria))
        .route("/api/sessions", post(start))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/slots/{slot}/topic", post(topic))
        .route("/api/sessions/{id}/slots/{slot}/messages", post(message))
        .route("/api/sessions/{id}/slots/{slot}/complete", post(complete))
        .route("/api/sessions/{id}/slots/{slot}/ratings", post(ratings))
        .route("/api/sessions/{id}/slots/{slot}/opinion", post(opinion))
        .route("/api/sessions/{id}/feedback", post(feedback))
        .with_state(service);
    match static_dir {
        Some(dir) if dir.is_dir() => api.fallback_service(ServeDir::new(dir)),
        _ => api,
    }
}

/// Serves the API on an already bound listener until the task is dropped.
pub async fn serve(service: Arc<Service>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}
