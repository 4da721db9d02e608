//! Route handlers.

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use gsseg_core::autoseg::{segment_auto_with_progress, Progress};
use gsseg_core::eval::{BenchConfig, ProviderSpec, ViewSourceName};
use gsseg_core::image_io::{decode_mask_png, encode_png_gray, encode_png_rgba, mask_to_image};
use gsseg_core::orientation::{orient_scene, orientation_transform, AxisMapping};
use gsseg_core::selection::{
    box_mask, combine_mask2d, combine_selection3d, depth_project, frustum_project, paint_mask,
    DepthTolerance, StrokePoint,
};
use gsseg_core::views::DEFAULT_VIEW_COUNT;
use gsseg_core::{ply, raster, Camera, Mask2D, SelectMode, Selection3D};
use serde::{Deserialize, Serialize};
use tokio::sync::OwnedMutexGuard;

use crate::error::{ApiError, ApiResult};
use crate::extract::{parse_json, ApiJson};
use crate::overlay::{self, Channel};
use crate::session::{JobEntry, Session, State as SessionState};
use crate::AppState;

type App = State<Arc<AppState>>;

async fn lock(app: &AppState, id: &str) -> ApiResult<OwnedMutexGuard<Session>> {
    Ok(app.session(id)?.lock_owned().await)
}

/// Runs `f` on the blocking pool while holding the session lock.
async fn blocking<R, F>(mut guard: OwnedMutexGuard<Session>, f: F) -> ApiResult<R>
where
    R: Send + 'static,
    F: FnOnce(&mut Session) -> ApiResult<R> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&mut guard))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn decode_b64(field: &str, data: &str) -> ApiResult<Vec<u8>> {
    B64.decode(data.trim())
        .map_err(|e| ApiError::bad_request(field, format!("invalid base64: {e}")))
}

fn parse_mode(field: &str, s: &str) -> ApiResult<SelectMode> {
    s.parse()
        .map_err(|e: gsseg_core::Error| ApiError::bad_request(field, e.to_string()))
}

/// The active mask when it was drawn with `camera`, else an empty canvas.
fn base_mask(state: &SessionState, camera: &Camera) -> Mask2D {
    match &state.mask {
        Some(m) if &m.camera == camera => m.clone(),
        _ => Mask2D::empty(camera.clone()),
    }
}

#[derive(Serialize)]
pub struct Stats {
    pub count: usize,
}

fn stats(state: &SessionState) -> Stats {
    Stats {
        count: state.selection.count(),
    }
}

#[derive(Deserialize)]
pub struct CreateSession {
    scene_path: PathBuf,
}

#[derive(Serialize)]
pub struct Created {
    session_id: String,
    gaussian_count: usize,
    sh_degree: usize,
}

pub async fn create_session(
    State(app): App,
    ApiJson(req): ApiJson<CreateSession>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    if app.session_count() >= app.config.max_sessions {
        return Err(ApiError::unavailable(format!(
            "session limit of {} reached",
            app.config.max_sessions
        )));
    }
    let path = req.scene_path;
    let scene = tokio::task::spawn_blocking(move || ply::load_scene(&path))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let reply = Created {
        session_id: String::new(),
        gaussian_count: scene.len(),
        sh_degree: scene.sh_degree(),
    };
    let id = app.insert_session(scene)?;
    log::info!("session {id}: {} Gaussians", reply.gaussian_count);
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session_id: id,
            ..reply
        }),
    ))
}

#[derive(Serialize)]
pub struct SessionInfo {
    session_id: String,
    gaussian_count: usize,
    sh_degree: usize,
    count: usize,
    has_mask: bool,
    occlusion_free: bool,
    references: usize,
    jobs: Vec<String>,
    undo: usize,
    redo: usize,
}

pub async fn session_info(State(app): App, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let s = lock(&app, &id).await?;
    let st = &s.state;
    Ok(Json(SessionInfo {
        session_id: s.id.clone(),
        gaussian_count: st.scene.len(),
        sh_degree: st.scene.sh_degree(),
        count: st.selection.count(),
        has_mask: st.mask.is_some(),
        occlusion_free: st.mask.as_ref().is_some_and(|m| m.occlusion_free),
        references: st.references.len(),
        jobs: st.jobs.keys().cloned().collect(),
        undo: s.undo_len(),
        redo: s.redo_len(),
    }))
}

pub async fn delete_session(State(app): App, Path(id): Path<String>) -> ApiResult<StatusCode> {
    app.remove_session(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

fn default_channels() -> Vec<Channel> {
    vec![Channel::Rgb]
}

#[derive(Deserialize)]
pub struct RenderRequest {
    camera: Camera,
    #[serde(default = "default_channels")]
    channels: Vec<Channel>,
}

/// PNG of the requested channels, tiled left to right.
pub async fn render(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<RenderRequest>,
) -> ApiResult<Response> {
    if req.channels.is_empty() {
        return Err(ApiError::bad_request(
            "channels",
            "at least one channel is required",
        ));
    }
    let s = lock(&app, &id).await?;
    let bytes = blocking(s, move |s| {
        let st = &s.state;
        let out = raster::render(&st.scene, &req.camera);
        let mask = st.mask.as_ref().filter(|m| m.camera == req.camera);
        let images = req
            .channels
            .iter()
            .map(|&ch| overlay::channel_image(&out, ch, &st.selection, mask))
            .collect::<gsseg_core::Result<Vec<_>>>()?;
        let img = if images.len() == 1 {
            images.into_iter().next().unwrap()
        } else {
            overlay::tile(&images)
        };
        Ok(encode_png_rgba(&img)?)
    })
    .await?;
    Ok(png(bytes))
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
pub struct PaintRequest {
    camera: Camera,
    /// Pixel coordinates `[x, y]` along the stroke.
    stroke: Vec<[f64; 2]>,
    radius: f64,
    #[serde(default = "default_true")]
    value: bool,
    #[serde(default)]
    mode: SelectMode,
    occlusion_free: Option<bool>,
}

#[derive(Serialize)]
pub struct MaskStats {
    pixels: usize,
    occlusion_free: bool,
}

fn set_mask(s: &mut Session, mut mask: Mask2D, occlusion_free: Option<bool>) -> MaskStats {
    if let Some(f) = occlusion_free {
        mask.occlusion_free = f;
    }
    let reply = MaskStats {
        pixels: mask.count(),
        occlusion_free: mask.occlusion_free,
    };
    let mut next = s.state.clone();
    next.mask = Some(mask);
    s.commit(next);
    reply
}

/// Paints the stroke onto a canvas of `!value` and combines that canvas
/// into the active mask with `mode`; erasing is `value: false` with mode I.
pub async fn paint(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<PaintRequest>,
) -> ApiResult<Json<MaskStats>> {
    if req.radius.is_nan() || req.radius < 0.0 {
        return Err(ApiError::bad_request(
            "radius",
            "radius must be non-negative",
        ));
    }
    let s = lock(&app, &id).await?;
    blocking(s, move |s| {
        let base = base_mask(&s.state, &req.camera);
        let canvas = if req.value {
            Mask2D::empty(req.camera.clone())
        } else {
            Mask2D::full(req.camera.clone())
        };
        let stroke: Vec<StrokePoint> = req
            .stroke
            .iter()
            .map(|&[x, y]| StrokePoint {
                x,
                y,
                radius: req.radius,
            })
            .collect();
        let incoming = paint_mask(&canvas, &stroke, req.value);
        let mask =
            combine_mask2d(&base, &incoming, req.mode)?.with_occlusion_free(base.occlusion_free);
        Ok(Json(set_mask(s, mask, req.occlusion_free)))
    })
    .await
}

#[derive(Deserialize)]
pub struct BoxRequest {
    camera: Camera,
    /// `[x0, y0, x1, y1]` in pixels.
    rect: [f64; 4],
    #[serde(default)]
    mode: SelectMode,
    occlusion_free: Option<bool>,
}

pub async fn box_select(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<BoxRequest>,
) -> ApiResult<Json<MaskStats>> {
    let s = lock(&app, &id).await?;
    blocking(s, move |s| {
        let base = base_mask(&s.state, &req.camera);
        let incoming = box_mask(&req.camera, req.rect);
        let mask =
            combine_mask2d(&base, &incoming, req.mode)?.with_occlusion_free(base.occlusion_free);
        Ok(Json(set_mask(s, mask, req.occlusion_free)))
    })
    .await
}

#[derive(Deserialize)]
pub struct MaskQuery {
    mode: Option<String>,
    occlusion_free: Option<bool>,
    /// Camera JSON; defaults to the active mask's camera.
    camera: Option<String>,
}

/// Uploads a PNG mask (grey >= 128 is foreground) and combines it into the
/// active mask.
pub async fn put_mask(
    State(app): App,
    Path(id): Path<String>,
    Query(q): Query<MaskQuery>,
    body: Bytes,
) -> ApiResult<Json<MaskStats>> {
    let mode = match &q.mode {
        Some(m) => parse_mode("mode", m)?,
        None => SelectMode::N,
    };
    let camera: Option<Camera> = q
        .camera
        .as_deref()
        .map(|c| parse_json(c.as_bytes()))
        .transpose()
        .map_err(|e| ApiError::bad_request("camera", e.message))?;
    let s = lock(&app, &id).await?;
    blocking(s, move |s| {
        let camera = camera
            .or_else(|| s.state.mask.as_ref().map(|m| m.camera.clone()))
            .ok_or_else(|| ApiError::bad_request("camera", "no camera given and no active mask"))?;
        let incoming = decode_mask_png(&body, camera.clone())
            .map_err(|e| ApiError::bad_request("body", e.to_string()))?;
        let base = base_mask(&s.state, &camera);
        let mask = combine_mask2d(&base, &incoming, mode)?.with_occlusion_free(base.occlusion_free);
        Ok(Json(set_mask(s, mask, q.occlusion_free)))
    })
    .await
}

pub async fn get_mask(State(app): App, Path(id): Path<String>) -> ApiResult<Response> {
    let s = lock(&app, &id).await?;
    let mask = s
        .state
        .mask
        .clone()
        .ok_or_else(|| ApiError::not_found("no active mask"))?;
    drop(s);
    Ok(png(encode_png_gray(&mask_to_image(&mask))?))
}

pub async fn clear_mask(State(app): App, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let mut s = lock(&app, &id).await?;
    let mut next = s.state.clone();
    next.mask = None;
    s.commit(next);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Serialize)]
pub struct References {
    references: usize,
}

/// Queues the active mask as a user mask for the next autoseg run.
pub async fn add_reference(State(app): App, Path(id): Path<String>) -> ApiResult<Json<References>> {
    let mut s = lock(&app, &id).await?;
    let mask = s
        .state
        .mask
        .clone()
        .ok_or_else(|| ApiError::unprocessable("no active mask"))?;
    let mut next = s.state.clone();
    next.references.push(mask);
    let references = next.references.len();
    s.commit(next);
    Ok(Json(References { references }))
}

pub async fn clear_references(
    State(app): App,
    Path(id): Path<String>,
) -> ApiResult<Json<References>> {
    let mut s = lock(&app, &id).await?;
    let mut next = s.state.clone();
    next.references.clear();
    s.commit(next);
    Ok(Json(References { references: 0 }))
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
pub enum ProjectKind {
    Frustum,
    Depth,
}

#[derive(Deserialize, Clone, Copy, Default)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceUnit {
    #[default]
    Relative,
    Absolute,
}

#[derive(Deserialize)]
pub struct ProjectRequest {
    kind: ProjectKind,
    tau_d: Option<f64>,
    #[serde(default)]
    tolerance: ToleranceUnit,
    #[serde(default)]
    mode: SelectMode,
}

pub async fn project(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<ProjectRequest>,
) -> ApiResult<Json<Stats>> {
    let s = lock(&app, &id).await?;
    blocking(s, move |s| {
        let mask = s
            .state
            .mask
            .as_ref()
            .ok_or_else(|| ApiError::unprocessable("no active mask"))?;
        let incoming = match req.kind {
            ProjectKind::Frustum => frustum_project(&s.state.scene, mask),
            ProjectKind::Depth => {
                let tol = match (req.tau_d, req.tolerance) {
                    (None, _) => DepthTolerance::default(),
                    (Some(t), ToleranceUnit::Relative) => DepthTolerance::Relative(t),
                    (Some(t), ToleranceUnit::Absolute) => DepthTolerance::Absolute(t),
                };
                depth_project(&s.state.scene, mask, tol)?
            }
        };
        let mut next = s.state.clone();
        next.selection = combine_selection3d(&s.state.selection, &incoming, req.mode)?;
        let reply = stats(&next);
        s.commit(next);
        Ok(Json(reply))
    })
    .await
}

fn default_m() -> usize {
    DEFAULT_VIEW_COUNT
}

fn default_provider() -> String {
    "geometric".into()
}

#[derive(Deserialize)]
pub struct AutosegRequest {
    #[serde(default)]
    view_source: ViewSourceName,
    #[serde(default = "default_m")]
    m: usize,
    #[serde(default = "default_true")]
    presegment: bool,
    /// Registry name or provider spec.
    #[serde(default = "default_provider")]
    provider: String,
    /// Needed for `training_subset` views.
    training_cameras: Option<Vec<Camera>>,
    /// Base64 selection sidecar; only the oracle provider uses it.
    truth: Option<String>,
}

#[derive(Serialize)]
pub struct AutosegReply {
    job_id: String,
    elapsed: f64,
    count: usize,
}

#[derive(Deserialize)]
pub struct StreamQuery {
    #[serde(default)]
    stream: bool,
}

fn wants_stream(q: &StreamQuery, headers: &HeaderMap) -> bool {
    q.stream
        || headers
            .get(header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.contains("application/x-ndjson"))
}

fn run_autoseg(
    app: &AppState,
    s: &mut Session,
    req: AutosegRequest,
    progress: &mut dyn FnMut(&Progress),
) -> ApiResult<AutosegReply> {
    if req.m == 0 {
        return Err(ApiError::bad_request("m", "m must be positive"));
    }
    let spec = app.resolve_provider(&req.provider)?;
    let truth = match &req.truth {
        Some(t) => Some(
            Selection3D::from_bytes(&decode_b64("truth", t)?)
                .map_err(|e| ApiError::bad_request("truth", e.to_string()))?,
        ),
        None => None,
    };
    let bench = BenchConfig {
        m: req.m,
        view_source: req.view_source,
        presegment: req.presegment,
        provider: spec,
    };
    let config = bench.autoseg_config(req.training_cameras.as_deref())?;
    let provider: Arc<dyn gsseg_core::autoseg::MaskProvider> =
        Arc::from(bench.provider.build(truth.as_ref(), &app.config.work_dir)?);
    let masks: Vec<Mask2D> = if s.state.references.is_empty() {
        vec![s
            .state
            .mask
            .clone()
            .ok_or_else(|| ApiError::unprocessable("no active mask or references"))?]
    } else {
        s.state.references.clone()
    };
    let seg =
        segment_auto_with_progress(&s.state.scene, masks, &config, provider.as_ref(), progress)?;
    let job_id = s.allocate_job_id();
    let reply = AutosegReply {
        job_id: job_id.clone(),
        elapsed: seg.result.elapsed,
        count: seg.selection().count(),
    };
    log::info!(
        "session {}: {job_id} selected {} in {:.3}s",
        s.id,
        reply.count,
        reply.elapsed
    );
    let mut next = s.state.clone();
    next.jobs.insert(
        job_id,
        Arc::new(JobEntry {
            segmentation: seg,
            provider,
        }),
    );
    s.commit(next);
    Ok(reply)
}

fn ndjson_line(value: &impl Serialize) -> Bytes {
    let mut line = serde_json::to_vec(value).unwrap_or_else(|_| b"{}".to_vec());
    line.push(b'\n');
    Bytes::from(line)
}

/// Runs the pipeline on the queued references (or the active mask). With
/// `?stream=true` or `Accept: application/x-ndjson` the reply is a stream
/// of progress lines ending in a `result` or `error` line.
pub async fn autoseg(
    State(app): App,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
    headers: HeaderMap,
    ApiJson(req): ApiJson<AutosegRequest>,
) -> ApiResult<Response> {
    let s = lock(&app, &id).await?;
    if !wants_stream(&q, &headers) {
        let app = app.clone();
        let reply = blocking(s, move |s| run_autoseg(&app, s, req, &mut |_| {})).await?;
        return Ok(Json(reply).into_response());
    }
    let (tx, rx) = tokio::sync::mpsc::unbounded_channel::<Bytes>();
    let app = app.clone();
    let mut guard = s;
    tokio::task::spawn_blocking(move || {
        let line_tx = tx.clone();
        let result = run_autoseg(&app, &mut guard, req, &mut |p| {
            let _ = line_tx.send(ndjson_line(p));
        });
        let last = match result {
            Ok(r) => {
                serde_json::json!({"event": "result", "job_id": r.job_id, "elapsed": r.elapsed, "count": r.count})
            }
            Err(e) => {
                serde_json::json!({"event": "error", "status": e.status.as_u16(), "error": e.message, "field": e.field})
            }
        };
        let _ = tx.send(ndjson_line(&last));
    });
    let stream = futures_util::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|b| (Ok::<_, Infallible>(b), rx))
    });
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(stream),
    )
        .into_response())
}

fn job(state: &SessionState, job: &str) -> ApiResult<Arc<JobEntry>> {
    state
        .jobs
        .get(job)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown job `{job}`")))
}

#[derive(Serialize)]
pub struct InjectionInfo {
    id: u64,
    position: usize,
}

#[derive(Serialize)]
pub struct JobInfo {
    job_id: String,
    frame_count: usize,
    count: usize,
    elapsed: f64,
    injections: Vec<InjectionInfo>,
    tracked: Vec<bool>,
    cameras: Vec<Camera>,
}

pub async fn job_info(
    State(app): App,
    Path((id, job_id)): Path<(String, String)>,
) -> ApiResult<Json<JobInfo>> {
    let s = lock(&app, &id).await?;
    let entry = job(&s.state, &job_id)?;
    drop(s);
    let seg = &entry.segmentation;
    Ok(Json(JobInfo {
        job_id,
        frame_count: seg.job.frame_count(),
        count: seg.selection().count(),
        elapsed: seg.result.elapsed,
        injections: seg
            .job
            .schedule()
            .iter()
            .map(|i| InjectionInfo {
                id: i.id,
                position: i.position,
            })
            .collect(),
        tracked: seg.job.tracked.iter().map(Option::is_some).collect(),
        cameras: seg.job.sequence.cameras.clone(),
    }))
}

pub async fn job_frame(
    State(app): App,
    Path((id, job_id, k)): Path<(String, String, String)>,
) -> ApiResult<Response> {
    let k: usize = k
        .parse()
        .map_err(|_| ApiError::bad_request("k", "frame index must be a non-negative integer"))?;
    let s = lock(&app, &id).await?;
    let entry = job(&s.state, &job_id)?;
    drop(s);
    let j = &entry.segmentation.job;
    let frame = j
        .frames
        .get(k)
        .ok_or_else(|| ApiError::not_found(format!("job has {} frames", j.frame_count())))?
        .clone();
    let mask = j.tracked[k].clone();
    let bytes = tokio::task::spawn_blocking(move || {
        encode_png_rgba(&overlay::frame_image(&frame, mask.as_ref()))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(png(bytes))
}

#[derive(Deserialize)]
#[serde(untagged)]
pub enum PositionCamera {
    /// Index into the job's view sequence.
    Index(usize),
    Camera(Camera),
}

#[derive(Deserialize)]
pub struct CorrectionRequest {
    position_camera: PositionCamera,
    /// Base64 PNG.
    mask: String,
}

#[derive(Serialize)]
pub struct CorrectionReply {
    injection_id: u64,
    position: usize,
    count: usize,
    elapsed: f64,
}

/// Adds a reference mask to a job, re-tracks downstream frames and
/// re-aggregates. The job's selection changes; the active selection does
/// not until it is combined in.
pub async fn add_correction(
    State(app): App,
    Path((id, job_id)): Path<(String, String)>,
    ApiJson(req): ApiJson<CorrectionRequest>,
) -> ApiResult<Json<CorrectionReply>> {
    let s = lock(&app, &id).await?;
    blocking(s, move |s| {
        let entry = job(&s.state, &job_id)?;
        let mut seg = entry.segmentation.clone();
        let camera = match req.position_camera {
            PositionCamera::Index(k) => {
                seg.job.sequence.cameras.get(k).cloned().ok_or_else(|| {
                    ApiError::bad_request(
                        "position_camera",
                        format!("job has {} views", seg.job.frame_count()),
                    )
                })?
            }
            PositionCamera::Camera(c) => c,
        };
        let png = decode_b64("mask", &req.mask)?;
        let mask = decode_mask_png(&png, camera)
            .map_err(|e| ApiError::bad_request("mask", e.to_string()))?;
        let injection_id = seg.add_correction(mask, entry.provider.as_ref())?;
        let position = seg
            .job
            .injections
            .iter()
            .find(|i| i.id == injection_id)
            .map(|i| i.position)
            .unwrap_or_default();
        let reply = CorrectionReply {
            injection_id,
            position,
            count: seg.selection().count(),
            elapsed: seg.result.elapsed,
        };
        let mut next = s.state.clone();
        next.jobs.insert(
            job_id,
            Arc::new(JobEntry {
                segmentation: seg,
                provider: entry.provider.clone(),
            }),
        );
        s.commit(next);
        Ok(Json(reply))
    })
    .await
}

pub async fn remove_correction(
    State(app): App,
    Path((id, job_id, cid)): Path<(String, String, String)>,
) -> ApiResult<Json<Stats>> {
    let cid: u64 = cid
        .parse()
        .map_err(|_| ApiError::bad_request("correction", "correction id must be an integer"))?;
    let s = lock(&app, &id).await?;
    blocking(s, move |s| {
        let entry = job(&s.state, &job_id)?;
        let mut seg = entry.segmentation.clone();
        seg.remove_correction(cid, entry.provider.as_ref())?;
        let reply = Stats {
            count: seg.selection().count(),
        };
        let mut next = s.state.clone();
        next.jobs.insert(
            job_id,
            Arc::new(JobEntry {
                segmentation: seg,
                provider: entry.provider.clone(),
            }),
        );
        s.commit(next);
        Ok(Json(reply))
    })
    .await
}

/// The active selection as a selection sidecar.
pub async fn get_selection(State(app): App, Path(id): Path<String>) -> ApiResult<Response> {
    let s = lock(&app, &id).await?;
    let bytes = s.state.selection.to_bytes();
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

#[derive(Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CombineSource {
    Job {
        job: String,
    },
    /// Base64 selection sidecar.
    Upload {
        data: String,
    },
}

#[derive(Deserialize)]
pub struct CombineRequest {
    #[serde(default)]
    mode: SelectMode,
    #[serde(flatten)]
    source: CombineSource,
}

pub async fn combine(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<CombineRequest>,
) -> ApiResult<Json<Stats>> {
    let s = lock(&app, &id).await?;
    blocking(s, move |s| {
        let incoming = match &req.source {
            CombineSource::Job { job: j } => job(&s.state, j)?.segmentation.selection().clone(),
            CombineSource::Upload { data } => {
                Selection3D::from_bytes(&decode_b64("data", data)?)
                    .map_err(|e| ApiError::bad_request("data", e.to_string()))?
            }
        };
        let mut next = s.state.clone();
        next.selection = combine_selection3d(&s.state.selection, &incoming, req.mode)?;
        let reply = stats(&next);
        s.commit(next);
        Ok(Json(reply))
    })
    .await
}

#[derive(Deserialize)]
pub struct OrientRequest {
    mapping: String,
}

#[derive(Serialize)]
pub struct OrientReply {
    /// Row-major.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

/// Rigidly transforms the session scene so the selection's principal axes
/// land on the mapped world axes.
pub async fn orient(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<OrientRequest>,
) -> ApiResult<Json<OrientReply>> {
    let mapping: AxisMapping = req
        .mapping
        .parse()
        .map_err(|e: gsseg_core::Error| ApiError::bad_request("mapping", e.to_string()))?;
    let s = lock(&app, &id).await?;
    blocking(s, move |s| {
        let (r, t) = orientation_transform(&s.state.scene, &s.state.selection, mapping)?;
        let scene = orient_scene(&s.state.scene, &s.state.selection, mapping)?;
        let mut next = s.state.clone();
        next.scene = Arc::new(scene);
        s.commit(next);
        Ok(Json(OrientReply {
            rotation: [0, 1, 2].map(|i| [0, 1, 2].map(|j| r[(i, j)])),
            translation: [t[0], t[1], t[2]],
        }))
    })
    .await
}

#[derive(Deserialize)]
pub struct ExportRequest {
    path: PathBuf,
    #[serde(default)]
    invert: bool,
}

#[derive(Serialize)]
pub struct ExportReply {
    written: usize,
}

pub async fn export(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<ExportRequest>,
) -> ApiResult<Json<ExportReply>> {
    let s = lock(&app, &id).await?;
    blocking(s, move |s| {
        let written =
            ply::export_selection(&s.state.scene, &s.state.selection, &req.path, req.invert)?;
        Ok(Json(ExportReply { written }))
    })
    .await
}

#[derive(Serialize)]
pub struct HistoryReply {
    count: usize,
    has_mask: bool,
    undo: usize,
    redo: usize,
}

fn history(s: &Session) -> HistoryReply {
    HistoryReply {
        count: s.state.selection.count(),
        has_mask: s.state.mask.is_some(),
        undo: s.undo_len(),
        redo: s.redo_len(),
    }
}

pub async fn undo(State(app): App, Path(id): Path<String>) -> ApiResult<Json<HistoryReply>> {
    let mut s = lock(&app, &id).await?;
    if !s.undo() {
        return Err(ApiError::unprocessable("nothing to undo"));
    }
    Ok(Json(history(&s)))
}

pub async fn redo(State(app): App, Path(id): Path<String>) -> ApiResult<Json<HistoryReply>> {
    let mut s = lock(&app, &id).await?;
    if !s.redo() {
        return Err(ApiError::unprocessable("nothing to redo"));
    }
    Ok(Json(history(&s)))
}

/// Parses `name=spec;name=spec` into a provider registry.
pub fn parse_registry(s: &str) -> gsseg_core::Result<HashMap<String, ProviderSpec>> {
    s.split(';')
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .map(|entry| {
            let (name, spec) = entry.split_once('=').ok_or_else(|| {
                gsseg_core::Error::Argument(format!("provider entry `{entry}` is not name=spec"))
            })?;
            Ok((name.trim().to_string(), spec.trim().parse()?))
        })
        .collect()
}
