//! HTTP API over [`System`]. All bodies are JSON; errors are
//! `{"code": ..., "message": ...}` with the status from
//! [`Error::classify`].

use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use famulus_core::annotation::{Decision, SuggestionId, TaskId, TaskState};
use famulus_core::corpus::{Layer, Span};
use famulus_core::feedback::{CaseDefinition, FeedbackEntry};

use crate::error::Error;
use crate::system::System;

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = e.classify();
        if status >= 500 {
            tracing::error!(error = %e, code, "request failed");
        }
        ApiError {
            status: StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs blocking system work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, Error> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        })?
        .map_err(ApiError::from)
}

#[derive(Debug, Deserialize)]
pub struct NewCase {
    #[serde(flatten)]
    pub case: CaseDefinition,
    #[serde(default)]
    pub feedback: Vec<FeedbackEntry>,
}

#[derive(Debug, Deserialize)]
pub struct Submission {
    pub user_id: String,
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct VerdictBody {
    pub verdict: Decision,
}

#[derive(Debug, Deserialize)]
pub struct SpanBody {
    pub layer: Layer,
    pub class: String,
    pub sentence: usize,
    pub token_start: usize,
    pub token_end: usize,
}

#[derive(Debug, Deserialize)]
pub struct TaskQuery {
    pub state: Option<TaskState>,
}

async fn create_case(
    State(system): State<System>,
    body: Result<Json<NewCase>, axum::extract::rejection::JsonRejection>,
) -> Result<(StatusCode, Json<CaseDefinition>), ApiError> {
    let Json(body) = body.map_err(bad_json)?;
    let case = blocking(move || system.create_case(body.case, body.feedback)).await?;
    Ok((StatusCode::CREATED, Json(case)))
}

async fn get_case(
    State(system): State<System>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<CaseDefinition> {
    system.case(&id).map(Json).map_err(ApiError::from)
}

async fn list_cases(State(system): State<System>) -> Json<Vec<String>> {
    Json(system.case_ids())
}

async fn submit(
    State(system): State<System>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<Submission>, axum::extract::rejection::JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(body) = body.map_err(bad_json)?;
    let outcome = blocking(move || system.submit(&id, &body.user_id, &body.text)).await?;
    Ok((StatusCode::CREATED, Json(outcome)))
}

async fn list_tasks(
    State(system): State<System>,
    Query(query): Query<TaskQuery>,
) -> impl IntoResponse {
    Json(system.tasks(query.state))
}

async fn get_task(
    State(system): State<System>,
    UrlPath(id): UrlPath<TaskId>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(system.task(id)?))
}

async fn verdict(
    State(system): State<System>,
    UrlPath((id, sid)): UrlPath<(TaskId, SuggestionId)>,
    body: Result<Json<VerdictBody>, axum::extract::rejection::JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(body) = body.map_err(bad_json)?;
    let task = blocking(move || system.review(id, sid, body.verdict)).await?;
    Ok(Json(task))
}

async fn add_span(
    State(system): State<System>,
    UrlPath(id): UrlPath<TaskId>,
    body: Result<Json<SpanBody>, axum::extract::rejection::JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(b) = body.map_err(bad_json)?;
    let span = Span::new(b.layer, b.class, b.sentence, b.token_start, b.token_end);
    let task = blocking(move || system.add_span(id, span)).await?;
    Ok((StatusCode::CREATED, Json(task)))
}

async fn finalize(
    State(system): State<System>,
    UrlPath(id): UrlPath<TaskId>,
) -> Result<impl IntoResponse, ApiError> {
    let outcome = blocking(move || system.finalize(id)).await?;
    Ok(Json(outcome))
}

async fn retrain(State(system): State<System>) -> Result<impl IntoResponse, ApiError> {
    let status = blocking(move || system.retrain()).await?;
    Ok((StatusCode::ACCEPTED, Json(status)))
}

async fn model(State(system): State<System>) -> impl IntoResponse {
    Json(system.model_versions())
}

/// Pretty JSON with a trailing newline; the output depends only on the
/// journal and the model snapshots.
async fn metrics(State(system): State<System>) -> Response {
    let mut body = serde_json::to_string_pretty(&system.metrics()).expect("metrics serialize");
    body.push('\n');
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn bad_json(e: axum::extract::rejection::JsonRejection) -> ApiError {
    ApiError {
        status: StatusCode::BAD_REQUEST,
        code: "bad_request",
        message: e.body_text(),
    }
}

async fn require_token(
    State(system): State<System>,
    headers: HeaderMap,
    request: Request,
    next: Next,
) -> Response {
    if let Some(expected) = &system.config().instructor_token {
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(expected.as_str()) {
            return ApiError::from(Error::Unauthorized).into_response();
        }
    }
    next.run(request).await
}

pub fn router(system: System) -> Router {
    let auth = middleware::from_fn_with_state(system.clone(), require_token);
    let mut app = Router::new()
        .route(
            "/cases",
            get(list_cases).merge(post(create_case).route_layer(auth.clone())),
        )
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/submissions", post(submit))
        .route("/tasks", get(list_tasks).route_layer(auth.clone()))
        .route("/tasks/{id}", get(get_task).route_layer(auth.clone()))
        .route(
            "/tasks/{id}/suggestions/{sid}/verdict",
            post(verdict).route_layer(auth.clone()),
        )
        .route(
            "/tasks/{id}/spans",
            post(add_span).route_layer(auth.clone()),
        )
        .route(
            "/tasks/{id}/finalize",
            post(finalize).route_layer(auth.clone()),
        )
        .route("/admin/retrain", post(retrain).route_layer(auth.clone()))
        .route("/admin/model", get(model).route_layer(auth))
        .route("/metrics", get(metrics));
    if let Some(dir) = system.config().ui_dir.as_deref().filter(|d| d.is_dir()) {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.with_state(system)
}

/// Binds the configured port and serves until Ctrl-C.
pub async fn serve(system: System) -> crate::Result<()> {
    let port = system.config().port;
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(system))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
