//! HTTP API under `/api/v1`.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::sync::Mutex;

use crate::error::ServiceError;
use crate::ops::{self, LabelRequest, PublishRequest};
use crate::workspace::{Clock, TaskStatus, Workspace};

pub const DEFAULT_LEASE: Duration = Duration::from_secs(600);

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub lease: Duration,
    pub bearer_token: Option<String>,
    pub clock: Clock,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            lease: DEFAULT_LEASE,
            bearer_token: None,
            clock: Clock::default(),
        }
    }
}

struct AppState {
    ws: Workspace,
    config: ApiConfig,
    /// Serializes every request that touches the data directory, and holds
    /// the lease table: task id to lease expiry.
    leases: Mutex<HashMap<String, Instant>>,
}

type Shared = Arc<AppState>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

pub fn router(ws: Workspace, config: ApiConfig) -> Router {
    let state = Arc::new(AppState {
        ws,
        config,
        leases: Mutex::new(HashMap::new()),
    });
    Router::new()
        .route("/api/v1/batches/{id}", get(batch_summary))
        .route("/api/v1/batches/{id}/next-task", get(next_task))
        .route("/api/v1/tasks/{id}/label", post(label_task))
        .route("/api/v1/batches/{id}/publish", post(publish))
        .route("/api/v1/versions/{id}/profile", get(profile))
        .route("/api/v1/delta", get(delta))
        .route("/api/v1/agents/{id}/report", get(agent_report))
        .fallback(|| async {
            ServiceError::not_found("no_route", "no such endpoint")
        })
        .layer(middleware::from_fn_with_state(state.clone(), authorize))
        .with_state(state)
}

async fn authorize(State(state): State<Shared>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.config.bearer_token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            let body = ServiceError::invalid("unauthorized", "missing or wrong bearer token");
            return (StatusCode::UNAUTHORIZED, Json(body.body())).into_response();
        }
    }
    next.run(request).await
}

async fn batch_summary(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let _guard = state.leases.lock().await;
    Ok(Json(state.ws.load_batch(&id)?.summary()).into_response())
}

/// Hands out the first pending task that nobody holds a live lease on.
async fn next_task(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let mut leases = state.leases.lock().await;
    let batch = state.ws.load_batch(&id)?;
    let now = Instant::now();
    leases.retain(|_, expiry| *expiry > now);
    let task = batch
        .tasks
        .into_iter()
        .find(|t| t.status == TaskStatus::Pending && !leases.contains_key(&t.task_id));
    match task {
        Some(task) => {
            leases.insert(task.task_id.clone(), now + state.config.lease);
            Ok(Json(task).into_response())
        }
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

async fn label_task(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<LabelRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body.map_err(|e| ServiceError::invalid("bad_request", e.body_text()))?;
    let mut leases = state.leases.lock().await;
    let task = ops::label_task(&state.ws, &id, &req)?;
    leases.remove(&id);
    Ok(Json(task).into_response())
}

async fn publish(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Option<Json<PublishRequest>>,
) -> ApiResult<Response> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let _guard = state.leases.lock().await;
    let manifest = ops::publish_batch(&state.ws, &id, &req, state.config.clock.now())?;
    Ok(Json(manifest).into_response())
}

async fn profile(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(ops::profile(&state.ws, &id, None)?).into_response())
}

#[derive(Debug, Deserialize)]
struct DeltaQuery {
    v1: String,
    v2: String,
}

async fn delta(
    State(state): State<Shared>,
    query: Result<Query<DeltaQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = query.map_err(|e| ServiceError::invalid("bad_request", e.body_text()))?;
    Ok(Json(ops::delta(&state.ws, &q.v1, &q.v2)?).into_response())
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    gds: String,
}

async fn agent_report(
    State(state): State<Shared>,
    Path(id): Path<String>,
    query: Result<Query<ReportQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = query.map_err(|e| ServiceError::invalid("bad_request", e.body_text()))?;
    Ok(Json(ops::agent_report(&state.ws, &id, &q.gds)?).into_response())
}

/// Serves until ctrl-c.
pub async fn serve(ws: Workspace, config: ApiConfig, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(ws, config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
