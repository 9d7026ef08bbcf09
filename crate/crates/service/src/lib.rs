//! HTTP review service: the Yellow queue, full record packages, decision
//! submission with optimistic concurrency, and accreditation reports.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde_json::json;

pub use itemcert::api::{
    page_records, DecisionRequest, DecisionResponse, Package, QueueFilter, QueuePage, RecordSummary,
};
use itemcert::certifier::{Certifier, ReviewError, ReviewSubmission};
use itemcert::clock::Clock;
use itemcert::ledger::{AuditSink, EventType, Ledger};
use itemcert::model::{rfc3339, CertificationRecord, ReviewRecord, Status};
use itemcert::pipeline::Verifier;
use itemcert::report::{render_document, summary_report, Period};
use itemcert::store::{RecordStore, StoreError};

pub const TOKEN_ENV: &str = "REVIEW_API_TOKEN";
pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<RecordStore>,
    pub ledger: Arc<Mutex<Ledger>>,
    pub verifier: Arc<Verifier>,
    pub certifier: Arc<Certifier>,
    pub clock: Arc<dyn Clock>,
    pub token: Arc<str>,
}

impl AppState {
    pub fn new(
        store: RecordStore,
        ledger: Ledger,
        verifier: Verifier,
        clock: Arc<dyn Clock>,
        token: impl Into<Arc<str>>,
    ) -> Result<AppState, String> {
        let certifier = Certifier::new(verifier.config.thresholds, clock.clone())
            .map_err(|e| e.to_string())?
            .with_config_hash(verifier.config.digest());
        Ok(AppState {
            store: Arc::new(store),
            ledger: Arc::new(Mutex::new(ledger)),
            verifier: Arc::new(verifier),
            certifier: Arc::new(certifier),
            clock,
            token: token.into(),
        })
    }
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        let message = e.to_string();
        match e {
            StoreError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", message),
            StoreError::VersionConflict { .. } => ApiError::new(StatusCode::CONFLICT, "version_conflict", message),
            StoreError::Duplicate(_) => ApiError::new(StatusCode::CONFLICT, "duplicate", message),
            StoreError::Io(_) | StoreError::Decode { .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", message)
            }
        }
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> ApiError {
        let message = e.to_string();
        let (status, code) = match e {
            ReviewError::VersionConflict { .. } => (StatusCode::CONFLICT, "version_conflict"),
            ReviewError::NotReviewable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "not_reviewable"),
            ReviewError::ReVerificationFailed { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "reverification_failed")
            }
            ReviewError::InvalidEdits(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_edits"),
            ReviewError::InvalidReview(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_review"),
            ReviewError::Verifier(_) => (StatusCode::INTERNAL_SERVER_ERROR, "verifier_failure"),
            ReviewError::Ledger(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_failure"),
        };
        ApiError::new(status, code, message)
    }
}

// ---------------------------------------------------------------------------
// Handlers
// ---------------------------------------------------------------------------

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    let presented = request
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match presented {
        Some(t) if constant_time_eq(t.as_bytes(), state.token.as_bytes()) => next.run(request).await,
        _ => ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token")
            .into_response(),
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    let entries = state.ledger.lock().len();
    Json(json!({"status": "ok", "records": state.store.len(), "ledger_entries": entries}))
}

fn parse_positive(params: &HashMap<String, String>, key: &str, default: usize) -> Result<usize, ApiError> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ApiError::bad_request("invalid_page", format!("{key} must be a positive integer"))),
        },
    }
}

async fn queue(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<QueuePage>, ApiError> {
    let filter = match params.get("status").map(String::as_str) {
        None | Some("") => QueueFilter::Pending,
        Some(s) => QueueFilter::parse(s)
            .ok_or_else(|| ApiError::bad_request("invalid_filter", format!("unknown status filter `{s}`")))?,
    };
    let page = parse_positive(&params, "page", 1)?;
    let page_size = parse_positive(&params, "page_size", DEFAULT_PAGE_SIZE)?;
    if page_size > MAX_PAGE_SIZE {
        return Err(ApiError::bad_request("invalid_page", format!("page_size is capped at {MAX_PAGE_SIZE}")));
    }
    Ok(Json(page_records(&state.store.snapshot(), filter, page, page_size)))
}

async fn package(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Package>, ApiError> {
    let record = state.store.get(&id).ok_or_else(|| StoreError::NotFound(id.clone()))?;
    Ok(Json(Package {
        reviewable: record.status == Status::PendingReview,
        record,
    }))
}

async fn decision(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<DecisionResponse>, ApiError> {
    let request: DecisionRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request("invalid_body", e.to_string()))?;
    let updated = tokio::task::spawn_blocking(move || submit(&state, &id, request))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(DecisionResponse {
        summary: RecordSummary::from(&updated),
        decision_trace: updated.decision_trace,
    }))
}

/// Applies a decision atomically: the version check, the ledger append,
/// and the store commit all happen under the ledger and store locks.
pub fn submit(state: &AppState, id: &str, request: DecisionRequest) -> Result<CertificationRecord, ApiError> {
    let decided_at = state.clock.now();
    let review = ReviewRecord::new(
        request.reviewer_pseudonym,
        request.action,
        request.edits,
        request.notes,
        request.started_at.unwrap_or(decided_at),
        decided_at,
    )
    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_review", e.to_string()))?;
    let submission = ReviewSubmission {
        review,
        expected_version: request.expected_version,
        override_reason: request.override_reason,
    };
    let mut ledger = state.ledger.lock();
    state.store.update(id, request.expected_version, |current| {
        state
            .certifier
            .apply_review(current, submission, state.verifier.as_ref(), &mut *ledger)
            .map_err(ApiError::from)
    })
}

fn parse_time(params: &HashMap<String, String>, key: &str) -> Result<Option<DateTime<Utc>>, ApiError> {
    params
        .get(key)
        .filter(|s| !s.is_empty())
        .map(|s| rfc3339::parse(s).map_err(|e| ApiError::bad_request("invalid_period", format!("{key}: {e}"))))
        .transpose()
}

async fn report(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let period = Period {
        from: parse_time(&params, "from")?,
        to: parse_time(&params, "to")?,
    };
    let document = match params.get("format").map(String::as_str) {
        None | Some("structured") => false,
        Some("document") => true,
        Some(other) => return Err(ApiError::bad_request("invalid_format", format!("unknown format `{other}`"))),
    };
    let report = summary_report(&state.store.snapshot(), period);
    state
        .ledger
        .lock()
        .append(
            EventType::ReportExported,
            json!({"period": report.period, "total_records": report.total_records, "format": if document { "document" } else { "structured" }}),
        )
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", e.to_string()))?;
    Ok(if document {
        ([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], render_document(&report)).into_response()
    } else {
        Json(report).into_response()
    })
}

pub fn router(state: AppState) -> Router {
    let protected = Router::new()
        .route("/api/queue", get(queue))
        .route("/api/items/{id}", get(package))
        .route("/api/items/{id}/decision", post(decision))
        .route("/api/reports/summary", get(report))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/api/health", get(health))
        .merge(protected)
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "review service listening");
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
