//! HTTP service over one loaded session.
//!
//! | route | |
//! |---|---|
//! | `GET /session` | frame count, fps, participants, load warnings |
//! | `GET /frames/{i}` | gaze and visible face per participant at aligned frame `i` |
//! | `GET /frames/{i}/image?participant=A` | scene image, when a frame-image directory is configured |
//! | `POST /filters` `{"expr": ".."}` | 202 `{job_id}`; 400 on a bad expression; 409 with the existing job for a duplicate |
//! | `GET /filters/{id}` | job status |
//! | `GET /filters/{id}/signal` | per-frame values (`?format=csv` for CSV) |
//! | `GET /filters/{id}/events` | event list (`?format=csv`) |
//! | `GET /filters/{id}/summary` | summary statistics |
//! | `GET /distribution?eyeA=&eyeB=&faceA=&faceB=` | contact distribution over four finished jobs |
//!
//! Result routes answer 202 with the job status until the job is done, and 422 if it failed.

#![allow(clippy::result_large_err)]

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use eyecontact_core::analytics::{
    contact_distribution, export_distribution, export_events, export_signal, export_summary,
    extract_events, summarize, ExportFormat,
};
use eyecontact_core::filters::{parse_filter_expr, FilterEngine, FilterSignal};
use eyecontact_core::geometry::PixelPoint;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::jobs::{JobInfo, JobRegistry, Submission};

pub struct AppState {
    pub engine: Arc<FilterEngine>,
    pub jobs: JobRegistry,
    pub warnings: Vec<String>,
}

impl AppState {
    pub fn new(engine: Arc<FilterEngine>, warnings: Vec<String>) -> Arc<Self> {
        Arc::new(Self {
            engine,
            jobs: JobRegistry::default(),
            warnings,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/session", get(session))
        .route("/frames/{i}", get(frame))
        .route("/frames/{i}/image", get(frame_image))
        .route("/filters", post(submit))
        .route("/filters/{id}", get(job))
        .route("/filters/{id}/signal", get(job_signal))
        .route("/filters/{id}/events", get(job_events))
        .route("/filters/{id}/summary", get(job_summary))
        .route("/distribution", get(distribution))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, bind: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn bytes(format: ExportFormat, body: Vec<u8>) -> Response {
    let ctype = match format {
        ExportFormat::Csv => "text/csv",
        ExportFormat::Json => "application/json",
    };
    ([(header::CONTENT_TYPE, ctype)], body).into_response()
}

async fn session(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let synced = s.engine.session();
    let participants: Vec<_> = synced
        .tracks
        .iter()
        .zip(["A", "B"])
        .map(|(t, slot)| {
            json!({
                "slot": slot,
                "id": t.participant_id,
                "scene_width": t.scene.width,
                "scene_height": t.scene.height,
                "drift_warnings": t.drift_warnings,
                "has_images": t.frame_images.is_some(),
            })
        })
        .collect();
    Json(json!({
        "frames": synced.len(),
        "fps": synced.fps,
        "frame_duration_us": synced.frame_duration_us,
        "shift_frames": synced.shift_frames,
        "participants": participants,
        "warnings": s.warnings,
    }))
}

#[derive(Serialize)]
struct FacePayload {
    success: bool,
    confidence: f64,
    landmarks: Vec<[f64; 2]>,
    au_intensity: BTreeMap<String, f64>,
    au_presence: BTreeMap<String, u8>,
}

#[derive(Serialize)]
struct ParticipantFrame {
    slot: &'static str,
    id: String,
    source_frame: usize,
    gaze_px: Option<PixelPoint>,
    /// The partner's face as this participant's scene camera saw it.
    partner_face: Option<FacePayload>,
}

async fn frame(State(s): State<Arc<AppState>>, Path(i): Path<usize>) -> Response {
    let synced = s.engine.session();
    if i >= synced.len() {
        return error(StatusCode::NOT_FOUND, format!("frame {i} is outside 0..{}", synced.len()));
    }
    let participants: Vec<ParticipantFrame> = synced
        .tracks
        .iter()
        .zip(["A", "B"])
        .map(|(t, slot)| ParticipantFrame {
            slot,
            id: t.participant_id.clone(),
            source_frame: t.frames[i].source_idx,
            gaze_px: t.frames[i].gaze_px,
            partner_face: t.face(i).map(|f| FacePayload {
                success: f.success,
                confidence: f.confidence,
                landmarks: f.landmarks.iter().map(|p| [p.x, p.y]).collect(),
                au_intensity: f.au_intensity.iter().map(|(k, v)| (format!("AU{k:02}"), *v)).collect(),
                au_presence: f.au_presence.iter().map(|(k, v)| (format!("AU{k:02}"), *v)).collect(),
            }),
        })
        .collect();
    Json(json!({
        "frame": i,
        "time_s": (i as i64 * synced.frame_duration_us) as f64 / 1e6,
        "participants": participants,
    }))
    .into_response()
}

#[derive(Deserialize)]
struct ImageQuery {
    participant: Option<String>,
}

async fn frame_image(
    State(s): State<Arc<AppState>>,
    Path(i): Path<usize>,
    Query(q): Query<ImageQuery>,
) -> Response {
    let synced = s.engine.session();
    let who = q.participant.as_deref().unwrap_or("A");
    let Some(slot) = synced.slot(who) else {
        return error(StatusCode::NOT_FOUND, format!("unknown participant `{who}`"));
    };
    let track = &synced.tracks[slot];
    let Some(dir) = &track.frame_images else {
        return error(StatusCode::NOT_FOUND, format!("no frame images configured for `{who}`"));
    };
    let Some(f) = track.frames.get(i) else {
        return error(StatusCode::NOT_FOUND, format!("frame {i} is outside 0..{}", track.len()));
    };
    for (ext, ctype) in [("png", "image/png"), ("jpg", "image/jpeg")] {
        let path = dir.join(format!("{:06}.{ext}", f.source_idx));
        if let Ok(data) = tokio::fs::read(&path).await {
            return ([(header::CONTENT_TYPE, ctype)], data).into_response();
        }
    }
    error(StatusCode::NOT_FOUND, format!("no image for frame {i}"))
}

#[derive(Deserialize)]
struct SubmitBody {
    expr: String,
}

async fn submit(State(s): State<Arc<AppState>>, body: Result<Json<SubmitBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let expr = match parse_filter_expr(&body.expr) {
        Ok(e) => e,
        Err(e) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({ "error": e.to_string(), "position": e.pos() })),
            )
                .into_response()
        }
    };
    match s.jobs.submit(&body.expr, &expr) {
        Submission::Duplicate(info) => (StatusCode::CONFLICT, Json(info)).into_response(),
        Submission::Created(info) => {
            let (jobs, engine, id) = (s.jobs.clone(), s.engine.clone(), info.job_id);
            tokio::task::spawn_blocking(move || jobs.run(id, &engine, &expr));
            (StatusCode::ACCEPTED, Json(info)).into_response()
        }
    }
}

fn job_id(raw: &str) -> Result<u64, Response> {
    raw.parse()
        .map_err(|_| error(StatusCode::NOT_FOUND, format!("unknown job `{raw}`")))
}

async fn job(State(s): State<Arc<AppState>>, Path(raw): Path<String>) -> Response {
    let id = match job_id(&raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    match s.jobs.info(id) {
        Some(info) => Json(info).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown job {id}")),
    }
}

fn not_ready(info: JobInfo) -> Response {
    let status = if info.status.is_finished() {
        StatusCode::UNPROCESSABLE_ENTITY
    } else {
        StatusCode::ACCEPTED
    };
    (status, Json(info)).into_response()
}

fn finished(s: &AppState, raw: &str) -> Result<Arc<FilterSignal>, Response> {
    let id = job_id(raw)?;
    match s.jobs.result(id) {
        None => Err(error(StatusCode::NOT_FOUND, format!("unknown job {id}"))),
        Some((_, Some(signal))) => Ok(signal),
        Some((info, None)) => Err(not_ready(info)),
    }
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

impl FormatQuery {
    fn parse(&self) -> Result<ExportFormat, Response> {
        match &self.format {
            None => Ok(ExportFormat::Json),
            Some(f) => f.parse().map_err(|e: String| error(StatusCode::BAD_REQUEST, e)),
        }
    }
}

async fn job_signal(
    State(s): State<Arc<AppState>>,
    Path(raw): Path<String>,
    Query(q): Query<FormatQuery>,
) -> Response {
    let run = || -> Result<Response, Response> {
        let format = q.parse()?;
        let signal = finished(&s, &raw)?;
        Ok(bytes(format, export_signal(&signal, format)))
    };
    run().unwrap_or_else(|r| r)
}

async fn job_events(
    State(s): State<Arc<AppState>>,
    Path(raw): Path<String>,
    Query(q): Query<FormatQuery>,
) -> Response {
    let run = || -> Result<Response, Response> {
        let format = q.parse()?;
        let signal = finished(&s, &raw)?;
        let events = extract_events(&signal, s.engine.session().frame_duration_us)
            .map_err(|e| error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        Ok(bytes(format, export_events(&events, format)))
    };
    run().unwrap_or_else(|r| r)
}

async fn job_summary(State(s): State<Arc<AppState>>, Path(raw): Path<String>) -> Response {
    let run = || -> Result<Response, Response> {
        let signal = finished(&s, &raw)?;
        let summary = summarize(&signal, s.engine.session().frame_duration_us)
            .map_err(|e| error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        Ok(bytes(ExportFormat::Json, export_summary(&summary)))
    };
    run().unwrap_or_else(|r| r)
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct DistributionQuery {
    eye_a: Option<String>,
    eye_b: Option<String>,
    face_a: Option<String>,
    face_b: Option<String>,
}

async fn distribution(State(s): State<Arc<AppState>>, Query(q): Query<DistributionQuery>) -> Response {
    let run = || -> Result<Response, Response> {
        let pick = |name: &str, v: &Option<String>| -> Result<Arc<FilterSignal>, Response> {
            let raw = v
                .as_deref()
                .ok_or_else(|| error(StatusCode::BAD_REQUEST, format!("missing `{name}` job id")))?;
            finished(&s, raw)
        };
        let ea = pick("eyeA", &q.eye_a)?;
        let eb = pick("eyeB", &q.eye_b)?;
        let fa = pick("faceA", &q.face_a)?;
        let fb = pick("faceB", &q.face_b)?;
        let dist = contact_distribution(&ea, &eb, &fa, &fb)
            .map_err(|e| error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        Ok(bytes(ExportFormat::Json, export_distribution(&dist)))
    };
    run().unwrap_or_else(|r| r)
}
