//! HTTP routes over [`Service`].

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tog_core::engine::{Outcome, SearchConfig};
use tog_core::kg::Correction;

use crate::service::{RunRef, Service, ServiceError};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AskRequest {
    pub question: String,
    /// Overrides the service defaults; omitted fields take engine defaults.
    #[serde(default)]
    pub config: Option<SearchConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrectRequest {
    pub correction: Correction,
}

/// Run summary without the trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunView {
    pub run_id: String,
    pub question: String,
    pub config: SearchConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub created_at: chrono::DateTime<chrono::Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<Correction>,
    /// This run first, then each run it re-asks.
    pub provenance: Vec<String>,
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::CorrectionsUnsupported => StatusCode::NOT_IMPLEMENTED,
            ServiceError::CorrectionRejected(_) => StatusCode::CONFLICT,
            ServiceError::RunFailed { .. } => StatusCode::BAD_GATEWAY,
            ServiceError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = json!({ "error": self.0.to_string() });
        if let ServiceError::RunFailed { run_id, .. } = &self.0 {
            body["run_id"] = json!(run_id);
        }
        (status, Json(body)).into_response()
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::Store(e.to_string())))?
        .map_err(ApiError)
}

async fn ask(State(svc): State<Arc<Service>>, Json(req): Json<AskRequest>) -> Result<Json<RunRef>, ApiError> {
    blocking(move || svc.ask(&req.question, req.config)).await.map(Json)
}

async fn run_view(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Json<RunView>, ApiError> {
    blocking(move || {
        let r = svc.get(&id)?;
        Ok(RunView {
            provenance: svc.provenance(&id)?,
            run_id: r.run_id,
            question: r.question,
            config: r.config,
            outcome: r.outcome,
            error: r.error,
            created_at: r.created_at,
            correction: r.correction,
        })
    })
    .await
    .map(Json)
}

async fn run_trace(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let trace = blocking(move || svc.trace(&id)).await?;
    Ok(Json(trace).into_response())
}

async fn correct(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(req): Json<CorrectRequest>,
) -> Result<Json<RunRef>, ApiError> {
    blocking(move || svc.correct_and_reask(&id, req.correction)).await.map(Json)
}

async fn kg_stats(State(svc): State<Arc<Service>>) -> Response {
    Json(svc.kg_stats()).into_response()
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/ask", post(ask))
        .route("/runs/{id}", get(run_view))
        .route("/runs/{id}/trace", get(run_trace))
        .route("/runs/{id}/correct", post(correct))
        .route("/kg/stats", get(kg_stats))
        .with_state(service)
}

pub async fn serve(service: Arc<Service>, listen: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}
