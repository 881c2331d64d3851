//! HTTP/JSON review service for interactive peak inspection and editing.
//!
//! Records live in memory for the lifetime of the process. Peak edits use
//! optimistic versioning: a PATCH must name the version it was made against,
//! and a stale version is rejected with 409 without touching the peaks.

pub mod decimate;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::ops::Range;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

use hrnv_core::io::{format_peaks, parse_signal, InputDescriptor, InputKind, RriUnit, SignalData};
use hrnv_core::model::{ibi_from_peaks, EcgRecord, IbiSeries, MetricsReport, PeakAnnotations};
use hrnv_core::pipeline::{analyze_intervals, prepare_ecg, AnalysisSettings};
use hrnv_core::qrs::{apply_peak_edits, detect_r_peaks, DetectorConfig, PeakEdit};

pub use decimate::{decimate, Waveform};

pub const DEFAULT_MAX_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("peaks are at version {current}, edit was made against {expected}")]
    VersionConflict { expected: u64, current: u64 },
    #[error("{0} already exists")]
    AlreadyExists(String),
    #[error("invalid request")]
    Validation(Vec<FieldError>),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    fn field(field: &str, message: impl ToString) -> Self {
        ApiError::Validation(vec![FieldError {
            field: field.to_string(),
            message: message.to_string(),
        }])
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fields: Vec<FieldError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    current_version: Option<u64>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        let (status, error, fields, current_version) = match self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found", vec![], None),
            ApiError::VersionConflict { current, .. } => (StatusCode::CONFLICT, "version_conflict", vec![], Some(current)),
            ApiError::AlreadyExists(_) => (StatusCode::CONFLICT, "already_exists", vec![], None),
            ApiError::Validation(fields) => (StatusCode::UNPROCESSABLE_ENTITY, "validation_error", fields, None),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", vec![], None),
        };
        let body = ErrorBody {
            error,
            message,
            fields,
            current_version,
        };
        (status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::field("body", r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// One loaded record. ECG sessions carry a signal; RRI sessions do not.
#[derive(Debug, Clone)]
pub struct Session {
    pub record_id: String,
    pub ecg: Option<EcgRecord>,
    pub ibi: Option<IbiSeries>,
    pub peaks: Option<PeakAnnotations>,
    cache: Option<(String, Vec<MetricsReport>)>,
}

impl Session {
    fn from_signal(data: SignalData) -> Self {
        let record_id = data.record_id().to_string();
        let (ecg, ibi, peaks) = match data {
            SignalData::Ecg(r) => (Some(r), None, None),
            SignalData::Rri(s) => (None, Some(s), None),
            SignalData::Peaks(p) => (None, None, Some(p)),
        };
        Self {
            record_id,
            ecg,
            ibi,
            peaks,
            cache: None,
        }
    }

    fn summary(&self) -> RecordSummary {
        RecordSummary {
            record_id: self.record_id.clone(),
            kind: if self.ecg.is_some() {
                InputKind::Ecg
            } else if self.ibi.is_some() {
                InputKind::Rri
            } else {
                InputKind::Peaks
            },
            fs: self.ecg.as_ref().map(|r| r.fs).or(self.peaks.as_ref().map(|p| p.fs)),
            length: self
                .ecg
                .as_ref()
                .map(|r| r.samples.len())
                .or(self.ibi.as_ref().map(IbiSeries::len))
                .unwrap_or(0),
            peak_count: self.peaks.as_ref().map(PeakAnnotations::len),
            version: self.peaks.as_ref().map(|p| p.version),
        }
    }

    fn ecg(&self) -> ApiResult<&EcgRecord> {
        self.ecg
            .as_ref()
            .ok_or_else(|| ApiError::field("record", format!("{} has no ECG signal", self.record_id)))
    }

    fn peaks(&self) -> ApiResult<&PeakAnnotations> {
        self.peaks
            .as_ref()
            .ok_or_else(|| ApiError::NotFound(format!("peaks for {}", self.record_id)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct AppState {
    records: Arc<RwLock<HashMap<String, Session>>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a record directly, replacing any record with the same ID.
    pub async fn insert(&self, data: SignalData) -> String {
        let session = Session::from_signal(data);
        let id = session.record_id.clone();
        self.records.write().await.insert(id.clone(), session);
        id
    }

    async fn with_session<T>(&self, id: &str, f: impl FnOnce(&Session) -> ApiResult<T>) -> ApiResult<T> {
        let records = self.records.read().await;
        let s = records.get(id).ok_or_else(|| ApiError::NotFound(format!("record {id}")))?;
        f(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub record_id: String,
    pub kind: InputKind,
    pub fs: Option<f64>,
    pub length: usize,
    pub peak_count: Option<usize>,
    pub version: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Upload {
    /// File name; the record ID is derived from it.
    pub name: String,
    pub kind: InputKind,
    pub fs: Option<f64>,
    #[serde(default)]
    pub rri_unit: RriUnit,
    #[serde(default)]
    pub prefix: String,
    #[serde(default)]
    pub postfix: String,
    pub content: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub record_id: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SignalQuery {
    pub start: Option<usize>,
    pub end: Option<usize>,
    pub max_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct DetectRequest {
    pub detector: DetectorConfig,
    pub baseline_remove: bool,
    pub segment: Option<Range<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PeakPatch {
    #[serde(default)]
    pub add: Vec<usize>,
    #[serde(default)]
    pub remove: Vec<usize>,
    pub expected_version: u64,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/records", get(list_records).post(upload_record))
        .route("/api/records/{id}/signal", get(signal))
        .route("/api/records/{id}/detect", post(detect))
        .route("/api/records/{id}/peaks", get(get_peaks).patch(patch_peaks))
        .route("/api/records/{id}/analyze", post(analyze))
        .route("/api/records/{id}/export/peaks", get(export_peaks))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review server listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn list_records(State(state): State<AppState>) -> Json<Vec<RecordSummary>> {
    let records = state.records.read().await;
    let mut list: Vec<RecordSummary> = records.values().map(Session::summary).collect();
    list.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    Json(list)
}

async fn upload_record(
    State(state): State<AppState>,
    body: Result<Json<Upload>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let Json(up) = body?;
    let desc = InputDescriptor {
        fs: up.fs,
        rri_unit: up.rri_unit,
        prefix: up.prefix,
        postfix: up.postfix,
        ..InputDescriptor::new(&up.name, up.kind)
    };
    let data = parse_signal(&up.content, &desc).map_err(|e| ApiError::field("content", e))?;
    let session = Session::from_signal(data);
    let id = session.record_id.clone();
    let mut records = state.records.write().await;
    if records.contains_key(&id) {
        return Err(ApiError::AlreadyExists(format!("record {id}")));
    }
    records.insert(id.clone(), session);
    Ok((StatusCode::CREATED, Json(Created { record_id: id })))
}

async fn signal(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SignalQuery>,
) -> ApiResult<Json<Waveform>> {
    state
        .with_session(&id, |s| {
            let x = &s.ecg()?.samples;
            let start = q.start.unwrap_or(0);
            let end = q.end.unwrap_or(x.len());
            if start >= end || end > x.len() {
                return Err(ApiError::field("range", format!("{start}:{end} is not within 0..{}", x.len())));
            }
            Ok(Json(decimate(x, start, end, q.max_points.unwrap_or(DEFAULT_MAX_POINTS))))
        })
        .await
}

async fn detect(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<DetectRequest>, JsonRejection>,
) -> ApiResult<Json<PeakAnnotations>> {
    let Json(req) = body?;
    let ecg = state.with_session(&id, |s| Ok(s.ecg()?.clone())).await?;
    let settings = AnalysisSettings {
        segment: req.segment,
        baseline_remove: req.baseline_remove,
        detector: req.detector,
        ..AnalysisSettings::default()
    };
    let peaks = tokio::task::spawn_blocking(move || -> ApiResult<PeakAnnotations> {
        let rec = prepare_ecg(&ecg, &settings).map_err(|e| ApiError::field("segment", e))?;
        detect_r_peaks(&rec, &settings.detector).map_err(|e| ApiError::field("detector", e))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;

    let mut records = state.records.write().await;
    let s = records.get_mut(&id).ok_or_else(|| ApiError::NotFound(format!("record {id}")))?;
    let version = s.peaks.as_ref().map_or(0, |p| p.version + 1);
    let peaks = PeakAnnotations { version, ..peaks };
    s.peaks = Some(peaks.clone());
    s.cache = None;
    Ok(Json(peaks))
}

async fn get_peaks(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PeakAnnotations>> {
    state.with_session(&id, |s| Ok(Json(s.peaks()?.clone()))).await
}

async fn patch_peaks(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<PeakPatch>, JsonRejection>,
) -> ApiResult<Json<PeakAnnotations>> {
    let Json(patch) = body?;
    let mut records = state.records.write().await;
    let s = records.get_mut(&id).ok_or_else(|| ApiError::NotFound(format!("record {id}")))?;
    let current = s.peaks()?;
    if current.version != patch.expected_version {
        return Err(ApiError::VersionConflict {
            expected: patch.expected_version,
            current: current.version,
        });
    }
    let limit = s.ecg.as_ref().map_or(usize::MAX, |r| r.samples.len());
    let edit = PeakEdit {
        add: patch.add,
        remove: patch.remove,
    };
    let updated = apply_peak_edits(current, &edit, limit).map_err(|e| ApiError::field("edit", e))?;
    s.peaks = Some(updated.clone());
    s.cache = None;
    Ok(Json(updated))
}

enum Lookup {
    Hit(Vec<MetricsReport>),
    Miss(IbiSeries, String),
}

fn cache_key(version: Option<u64>, settings: &AnalysisSettings) -> String {
    format!("{version:?}|{}", serde_json::to_string(settings).unwrap_or_default())
}

async fn analyze(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<AnalysisSettings>, JsonRejection>,
) -> ApiResult<Json<Vec<MetricsReport>>> {
    let Json(settings) = body?;
    if settings.segment.is_some() {
        return Err(ApiError::field("segment", "segments apply to detection, not analysis"));
    }
    let lookup = state
        .with_session(&id, |s| {
            let (ibi, version) = match (&s.ibi, &s.peaks) {
                (Some(ibi), _) => (ibi.clone(), None),
                (None, Some(p)) => (ibi_from_peaks(p).map_err(|e| ApiError::field("peaks", e))?, Some(p.version)),
                (None, None) => return Err(ApiError::NotFound(format!("peaks for {id}"))),
            };
            let key = cache_key(version, &settings);
            match &s.cache {
                Some((cached, reports)) if *cached == key => Ok(Lookup::Hit(reports.clone())),
                _ => Ok(Lookup::Miss(ibi, key)),
            }
        })
        .await?;
    let (ibi, key) = match lookup {
        Lookup::Hit(reports) => return Ok(Json(reports)),
        Lookup::Miss(ibi, key) => (ibi, key),
    };
    let reports = tokio::task::spawn_blocking({
        let settings = settings.clone();
        move || analyze_intervals(&ibi, &settings)
    })
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::field("settings", e))?;

    // the peaks may have changed while the analysis ran; only cache if not
    let mut records = state.records.write().await;
    if let Some(s) = records.get_mut(&id) {
        let version = s.ibi.is_none().then(|| s.peaks.as_ref().map(|p| p.version)).flatten();
        if cache_key(version, &settings) == key {
            s.cache = Some((key, reports.clone()));
        }
    }
    Ok(Json(reports))
}

async fn export_peaks(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    state
        .with_session(&id, |s| {
            let text = format_peaks(s.peaks()?);
            let disposition = format!("attachment; filename=\"{}_peaks.txt\"", s.record_id);
            Ok((
                [
                    (header::CONTENT_TYPE, "text/plain; charset=utf-8".to_string()),
                    (header::CONTENT_DISPOSITION, disposition),
                ],
                text,
            )
                .into_response())
        })
        .await
}
