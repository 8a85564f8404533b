//! JSON-over-HTTP API. Every route except `/health` needs
//! `Authorization: Bearer <token>`; the token maps to an annotator id.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::folds::FoldPrediction;
use super::service::{AnnotationService, Resolution};
use super::MutationType;
use crate::error::Error;
use crate::types::Label;

#[derive(Clone)]
struct AppState {
    service: AnnotationService,
    tokens: Arc<BTreeMap<String, String>>,
}

/// An [`Error`] or a missing/unknown bearer token, rendered as JSON.
#[derive(Debug)]
pub enum ApiError {
    Unauthorized,
    Core(Error),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Core(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match &self {
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token".to_string()),
            ApiError::Core(e) => {
                let (s, c) = match e {
                    Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
                    Error::NoTask => (StatusCode::NOT_FOUND, "no_task"),
                    Error::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
                    Error::InvalidArgument(_) => (StatusCode::BAD_REQUEST, "invalid_argument"),
                    Error::Forbidden(_) => (StatusCode::FORBIDDEN, "forbidden"),
                    Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
                    _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
                };
                (s, c, e.to_string())
            }
        };
        (status, Json(json!({"error": code, "message": message}))).into_response()
    }
}

struct Annotator(String);

impl FromRequestParts<AppState> for Annotator {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ApiError::Unauthorized)?;
        state.tokens.get(token.trim()).map(|a| Annotator(a.clone())).ok_or(ApiError::Unauthorized)
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> crate::Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Core(Error::invalid(format!("worker panicked: {e}"))))?
        .map_err(ApiError::Core)
}

#[derive(Deserialize)]
struct DecisionBody {
    paragraph_id: String,
    accept: bool,
}

#[derive(Deserialize)]
struct ClaimBody {
    paragraph_id: String,
    text: String,
}

#[derive(Deserialize)]
struct SkipBody {
    paragraph_id: String,
}

#[derive(Deserialize)]
struct MutationItem {
    text: String,
    #[serde(rename = "type")]
    kind: String,
}

#[derive(Deserialize)]
struct MutationsBody {
    claim_id: String,
    mutations: Vec<MutationItem>,
}

#[derive(Deserialize)]
struct LabelBody {
    claim_id: String,
    label: Label,
    #[serde(default)]
    evidence: Vec<Vec<String>>,
    #[serde(default)]
    elapsed_secs: f64,
}

#[derive(Deserialize)]
struct FoldBody {
    seed: u64,
}

#[derive(Deserialize)]
struct PredictionsBody {
    predictions: Vec<FoldPrediction>,
}

#[derive(Deserialize)]
struct ReviewBody {
    #[serde(flatten)]
    change: Resolution,
    #[serde(default)]
    note: String,
}

#[derive(Deserialize)]
struct ExportQuery {
    kind: String,
    #[serde(default)]
    seed: u64,
}

#[derive(Serialize)]
struct ConflictSummary {
    claim_id: String,
    annotations: Vec<String>,
}

/// All routes over a shared service. `tokens` maps bearer tokens to annotator ids.
pub fn router(service: AnnotationService, tokens: BTreeMap<String, String>) -> Router {
    let state = AppState { service, tokens: Arc::new(tokens) };
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/t0/decision", post(t0_decision))
        .route("/t1a/task", get(t1a_task))
        .route("/t1a/claim", post(t1a_claim))
        .route("/t1a/skip", post(t1a_skip))
        .route("/t1b/mutations", post(t1b_mutations))
        .route("/t2/task", get(t2_task))
        .route("/t2/label", post(t2_label))
        .route("/claims/{id}", get(claim))
        .route("/paragraphs/{id}/same-article", get(same_article))
        .route("/conflicts", get(conflicts))
        .route("/conflicts/{id}/resolve", post(resolve))
        .route("/folds", get(folds).post(create_fold))
        .route("/folds/{id}/predictions", post(predictions))
        .route("/review", get(review_queue))
        .route("/review/{claim_id}", post(apply_review))
        .route("/export", get(export))
        .with_state(state)
}

async fn t0_decision(State(s): State<AppState>, Annotator(who): Annotator, Json(b): Json<DecisionBody>) -> ApiResult<super::service::PreselectState> {
    Ok(Json(blocking(move || s.service.preselect(&who, &b.paragraph_id, b.accept)).await?))
}

async fn t1a_task(State(s): State<AppState>, Annotator(who): Annotator) -> ApiResult<super::ExtractionTask> {
    Ok(Json(blocking(move || s.service.next_extraction_task(&who)).await?))
}

async fn t1a_claim(State(s): State<AppState>, Annotator(who): Annotator, Json(b): Json<ClaimBody>) -> ApiResult<super::Claim> {
    Ok(Json(blocking(move || s.service.submit_claim(&who, &b.paragraph_id, &b.text)).await?))
}

async fn t1a_skip(State(s): State<AppState>, Annotator(who): Annotator, Json(b): Json<SkipBody>) -> ApiResult<serde_json::Value> {
    blocking(move || s.service.skip_extraction(&who, &b.paragraph_id)).await?;
    Ok(Json(json!({"skipped": true})))
}

async fn t1b_mutations(State(s): State<AppState>, Annotator(who): Annotator, Json(b): Json<MutationsBody>) -> ApiResult<super::MutationOutcome> {
    let items = b
        .mutations
        .into_iter()
        .map(|m| Ok((m.text, m.kind.parse::<MutationType>()?)))
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(Json(blocking(move || s.service.submit_mutations(&who, &b.claim_id, &items)).await?))
}

async fn t2_task(State(s): State<AppState>, Annotator(who): Annotator) -> ApiResult<super::LabelingTask> {
    Ok(Json(blocking(move || s.service.next_labeling_task(&who)).await?))
}

async fn t2_label(State(s): State<AppState>, Annotator(who): Annotator, Json(b): Json<LabelBody>) -> ApiResult<super::Annotation> {
    Ok(Json(blocking(move || s.service.submit_label(&who, &b.claim_id, b.label, &b.evidence, b.elapsed_secs)).await?))
}

async fn claim(State(s): State<AppState>, _: Annotator, Path(id): Path<String>) -> ApiResult<super::ClaimView> {
    Ok(Json(s.service.claim_view(&id)?))
}

async fn same_article(State(s): State<AppState>, _: Annotator, Path(id): Path<String>) -> ApiResult<Vec<crate::corpus::Paragraph>> {
    Ok(Json(s.service.same_article(&id)?))
}

async fn conflicts(State(s): State<AppState>, _: Annotator) -> ApiResult<Vec<ConflictSummary>> {
    Ok(Json(
        s.service
            .conflicts()
            .into_iter()
            .map(|(claim_id, annotations)| ConflictSummary { claim_id, annotations })
            .collect(),
    ))
}

async fn resolve(State(s): State<AppState>, Annotator(who): Annotator, Path(id): Path<String>, Json(b): Json<Resolution>) -> ApiResult<super::ConflictRecord> {
    Ok(Json(blocking(move || s.service.resolve_conflict(&who, &id, &b)).await?))
}

async fn folds(State(s): State<AppState>, _: Annotator) -> ApiResult<Vec<super::Fold>> {
    Ok(Json(s.service.folds()))
}

async fn create_fold(State(s): State<AppState>, Annotator(who): Annotator, Json(b): Json<FoldBody>) -> ApiResult<super::Fold> {
    Ok(Json(blocking(move || s.service.create_fold(&who, b.seed)).await?))
}

async fn predictions(State(s): State<AppState>, Annotator(who): Annotator, Path(id): Path<u32>, Json(b): Json<PredictionsBody>) -> ApiResult<Vec<super::ReviewItem>> {
    Ok(Json(blocking(move || s.service.submit_predictions(&who, id, &b.predictions)).await?))
}

async fn review_queue(State(s): State<AppState>, _: Annotator) -> ApiResult<Vec<super::ReviewItem>> {
    Ok(Json(s.service.review_queue()))
}

async fn apply_review(State(s): State<AppState>, Annotator(who): Annotator, Path(claim_id): Path<String>, Json(b): Json<ReviewBody>) -> ApiResult<super::ReviewItem> {
    Ok(Json(blocking(move || s.service.apply_review(&who, &claim_id, &b.change, &b.note)).await?))
}

async fn export(State(s): State<AppState>, _: Annotator, Query(q): Query<ExportQuery>) -> Result<Response, ApiError> {
    let body = blocking(move || match q.kind.as_str() {
        "dr" => crate::jsonl::to_string(&s.service.export_dr(q.seed)?),
        "nli" => crate::jsonl::to_string(&s.service.export_nli(q.seed)?),
        other => Err(Error::invalid(format!("export kind must be dr or nli, got {other:?}"))),
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}
