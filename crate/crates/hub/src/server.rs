//! HTTP API of the hub.
//!
//! ```text
//! POST /v1/models        SubmitRequest        -> 201 SubmitOutcome
//! POST /v1/identify      IdentifyRequest      -> QueryResponse
//! GET  /v1/models        -> {"models":[...ids]}
//! GET  /v1/models/{id}   -> ModelView
//! GET  /v1/export        -> export bundle (application/octet-stream)
//! POST /v1/import        export bundle        -> {"count":n}
//! ```
//!
//! Failures use the encoder-service envelope `{"error": code, "message": text}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pmi_core::registry::Registry;
use pmi_core::{Error, Result};
use serde::de::DeserializeOwned;

use crate::api::{CountResponse, IdentifyRequest, ModelView, SubmitRequest};
use crate::remote::ErrorEnvelope;

pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::DuplicateModel(_) | Error::DuplicateModelId(_) => StatusCode::CONFLICT,
        Error::UnknownModel(_) => StatusCode::NOT_FOUND,
        Error::EmptyRegistry | Error::AssignmentFailure(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::EndpointUnavailable(_) | Error::EncoderFailure(_) | Error::ProtocolViolation(_) => {
            StatusCode::BAD_GATEWAY
        }
        Error::NumericalFailure(_) | Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_of(&self.0), Json(ErrorEnvelope::of(&self.0))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| Error::MalformedPayload(e.to_string()))
}

/// Runs registry work off the async executor; scoring is CPU-bound and
/// remote encoders block.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::NumericalFailure(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn submit(State(reg): State<Arc<Registry>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: SubmitRequest = parse(&body)?;
    let (meta, source) = req.into_parts()?;
    let outcome = blocking(move || reg.submit(meta, source)).await?;
    Ok((StatusCode::CREATED, Json(outcome)))
}

async fn identify(State(reg): State<Arc<Registry>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: IdentifyRequest = parse(&body)?;
    let resp = blocking(move || reg.query(&req.examples, req.method, req.top_k, &req.tags)).await?;
    Ok(Json(resp))
}

async fn list_models(State(reg): State<Arc<Registry>>) -> impl IntoResponse {
    Json(serde_json::json!({ "models": reg.model_ids() }))
}

pub fn model_view(reg: &Registry, id: &str) -> Result<ModelView> {
    let entry = reg.get(id).ok_or_else(|| Error::UnknownModel(id.to_owned()))?;
    let rec = reg.record(id).expect("entry exists");
    Ok(ModelView {
        model_id: rec.model_id,
        display_name: rec.display_name,
        download_count: rec.download_count,
        tags: rec.tags,
        prompt_origin: rec.specification.prompt_origin,
        pairs: rec.specification.len(),
        dim: rec.specification.dim(),
        prompts: entry.prompts().map(<[String]>::to_vec),
    })
}

async fn get_model(State(reg): State<Arc<Registry>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(model_view(&reg, &id)?))
}

async fn export(State(reg): State<Arc<Registry>>) -> ApiResult<impl IntoResponse> {
    let (count, bytes) = blocking(move || reg.export_bytes()).await?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (header::HeaderName::from_static("x-model-count"), count.to_string()),
        ],
        bytes,
    ))
}

async fn import(State(reg): State<Arc<Registry>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let count = blocking(move || reg.import_bytes(&body)).await?;
    Ok(Json(CountResponse { count }))
}

async fn fallback() -> Response {
    let body = ErrorEnvelope {
        error: "NotFound".into(),
        message: "no such endpoint".into(),
    };
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/v1/models", post(submit).get(list_models))
        .route("/v1/models/{id}", get(get_model))
        .route("/v1/identify", post(identify))
        .route("/v1/export", get(export))
        .route("/v1/import", post(import))
        .fallback(fallback)
        .layer(axum::extract::DefaultBodyLimit::max(256 << 20))
        .with_state(registry)
}

/// Serves until Ctrl-C.
pub async fn serve(registry: Arc<Registry>, bind: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(registry))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
