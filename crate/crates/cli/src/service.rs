//! Local HTTP/JSON service backing the binding and playback UI.
//!
//! Sessions live in memory and, with a persistence directory, are
//! snapshotted as JSON after every change. Each session has its own lock so a
//! running transfer blocks edits to that session only.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;

use xtopo_core::{BindingFile, Error, TransferConfig};

use crate::pipeline::{self, Character, Report, Run, Summary};

const BODY_LIMIT: usize = 64 << 20;

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Conflict(&'static str, String),
    Domain(Error),
    Internal(String),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Domain(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "BadRequest".to_string(), m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "NotFound".to_string(), m),
            ApiError::Conflict(k, m) => (StatusCode::CONFLICT, k.to_string(), m),
            // A file that does not parse is malformed input; anything else the
            // domain rejects is an invariant violation.
            ApiError::Domain(e @ Error::Bvh(_)) => (StatusCode::BAD_REQUEST, e.kind(), e.to_string()),
            ApiError::Domain(e) => (StatusCode::UNPROCESSABLE_ENTITY, e.kind(), e.to_string()),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "Internal".to_string(), m),
        };
        (status, Json(json!({ "error": kind, "message": message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Outcome {
    run: Run,
    report: Report,
}

#[derive(Default)]
struct Session {
    source: Option<Character>,
    targets: Vec<Character>,
    bindings: Option<BindingFile>,
    config: TransferConfig,
    result: Option<Outcome>,
    jobs: u64,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    id: u64,
    source: Option<String>,
    targets: Vec<String>,
    bindings: Option<BindingFile>,
    config: TransferConfig,
}

impl Session {
    fn snapshot(&self, id: u64) -> Snapshot {
        Snapshot {
            id,
            source: self.source.as_ref().map(|c| c.text.clone()),
            targets: self.targets.iter().map(|c| c.text.clone()).collect(),
            bindings: self.bindings.clone(),
            config: self.config.clone(),
        }
    }

    fn restore(s: Snapshot) -> Result<Self, Error> {
        Ok(Self {
            source: s.source.as_deref().map(Character::parse).transpose()?,
            targets: s.targets.iter().map(|t| Character::parse(t)).collect::<Result<_, _>>()?,
            bindings: s.bindings,
            config: s.config,
            result: None,
            jobs: 0,
        })
    }

    fn source(&self) -> ApiResult<&Character> {
        self.source
            .as_ref()
            .ok_or_else(|| ApiError::Conflict("NoSource", "upload a source motion first".into()))
    }

    fn targets(&self) -> ApiResult<&[Character]> {
        if self.targets.is_empty() {
            return Err(ApiError::Conflict("NoTargets", "upload target example motions first".into()));
        }
        Ok(&self.targets)
    }

    fn outcome(&self) -> ApiResult<&Outcome> {
        self.result
            .as_ref()
            .ok_or_else(|| ApiError::Conflict("NoResult", "run a transfer first".into()))
    }
}

pub struct AppState {
    sessions: RwLock<HashMap<u64, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    persist: Option<PathBuf>,
}

impl AppState {
    /// Empty state, or the sessions found in `persist` when given.
    pub fn new(persist: Option<PathBuf>) -> std::io::Result<Self> {
        let mut sessions = HashMap::new();
        let mut next = 1;
        if let Some(dir) = &persist {
            std::fs::create_dir_all(dir)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            paths.sort();
            for path in paths {
                let text = std::fs::read_to_string(&path)?;
                let snap: Snapshot = serde_json::from_str(&text)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
                let id = snap.id;
                let session = Session::restore(snap)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
                next = next.max(id + 1);
                sessions.insert(id, Arc::new(Mutex::new(session)));
            }
        }
        Ok(Self {
            sessions: RwLock::new(sessions),
            next_id: AtomicU64::new(next),
            persist,
        })
    }

    fn session(&self, id: &str) -> ApiResult<(u64, Arc<Mutex<Session>>)> {
        let missing = || ApiError::NotFound(format!("no session {id}"));
        let n: u64 = id.parse().map_err(|_| missing())?;
        let map = self.sessions.read().expect("session map lock");
        map.get(&n).cloned().map(|s| (n, s)).ok_or_else(missing)
    }

    fn save(&self, id: u64, session: &Session) -> ApiResult<()> {
        let Some(dir) = &self.persist else {
            return Ok(());
        };
        let text = serde_json::to_string(&session.snapshot(id)).map_err(|e| ApiError::Internal(e.to_string()))?;
        write_atomic(&dir.join(format!("session-{id:08}.json")), &text).map_err(|e| ApiError::Internal(e.to_string()))
    }
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(tmp, path)
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/source", post(upload_source))
        .route("/sessions/{id}/targets", post(upload_targets))
        .route("/sessions/{id}/autobind", get(autobind))
        .route("/sessions/{id}/bindings", get(get_bindings).put(put_bindings))
        .route("/sessions/{id}/config", get(get_config).put(put_config))
        .route("/sessions/{id}/transfer", post(run_transfer))
        .route("/sessions/{id}/jobs/{job}", get(job_status))
        .route("/sessions/{id}/result/frames", get(result_frames))
        .route("/sessions/{id}/result/bvh", get(result_bvh))
        .route("/sessions/{id}/metrics", get(result_metrics))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

async fn create_session(State(app): State<Arc<AppState>>) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let id = app.next_id.fetch_add(1, Ordering::SeqCst);
    let session = Session::default();
    app.save(id, &session)?;
    app.sessions
        .write()
        .expect("session map lock")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(json!({ "id": id.to_string() }))))
}

/// BVH texts from a multipart form (every file field) or a raw body.
async fn bvh_texts(req: Request) -> ApiResult<Vec<String>> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let utf8 = |b: Bytes| String::from_utf8(b.to_vec()).map_err(|_| ApiError::BadRequest("upload is not UTF-8 text".into()));
    if multipart {
        let mut form = Multipart::from_request(req, &())
            .await
            .map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let mut out = Vec::new();
        while let Some(field) = form.next_field().await.map_err(|e| ApiError::BadRequest(e.to_string()))? {
            let bytes = field.bytes().await.map_err(|e| ApiError::BadRequest(e.to_string()))?;
            out.push(utf8(bytes)?);
        }
        if out.is_empty() {
            return Err(ApiError::BadRequest("multipart form has no files".into()));
        }
        Ok(out)
    } else {
        let bytes = axum::body::to_bytes(req.into_body(), BODY_LIMIT)
            .await
            .map_err(|e| ApiError::BadRequest(e.to_string()))?;
        if bytes.is_empty() {
            return Err(ApiError::BadRequest("empty upload".into()));
        }
        Ok(vec![utf8(bytes)?])
    }
}

async fn upload_source(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    req: Request,
) -> ApiResult<Json<Summary>> {
    let (n, session) = app.session(&id)?;
    let texts = bvh_texts(req).await?;
    if texts.len() != 1 {
        return Err(ApiError::BadRequest(format!("expected one source file, got {}", texts.len())));
    }
    let character = Character::parse(&texts[0])?;
    let summary = character.summary();
    let mut s = session.lock().await;
    s.source = Some(character);
    s.result = None;
    app.save(n, &s)?;
    Ok(Json(summary))
}

#[derive(Serialize)]
struct TargetsSummary {
    joints: Vec<String>,
    parents: Vec<Option<usize>>,
    examples: Vec<ExampleSummary>,
}

#[derive(Serialize)]
struct ExampleSummary {
    frames: usize,
    fps: f64,
}

/// Replaces the whole example list with the uploaded files.
async fn upload_targets(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    req: Request,
) -> ApiResult<Json<TargetsSummary>> {
    let (n, session) = app.session(&id)?;
    let texts = bvh_texts(req).await?;
    let targets: Vec<Character> = texts.iter().map(|t| Character::parse(t)).collect::<Result<_, _>>()?;
    pipeline::check_targets(&targets)?;
    let first = targets[0].summary();
    let summary = TargetsSummary {
        joints: first.joints,
        parents: first.parents,
        examples: targets
            .iter()
            .map(|t| ExampleSummary {
                frames: t.motion.frames(),
                fps: t.motion.fps,
            })
            .collect(),
    };
    let mut s = session.lock().await;
    s.targets = targets;
    s.result = None;
    app.save(n, &s)?;
    Ok(Json(summary))
}

#[derive(Deserialize)]
struct AutobindQuery {
    #[serde(rename = "L")]
    length: Option<usize>,
    top_k: Option<usize>,
}

async fn autobind(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<AutobindQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let (_, session) = app.session(&id)?;
    let s = session.lock().await;
    let source = s.source()?;
    let target = &s.targets()?[0];
    let length = q.length.unwrap_or(4);
    if length == 0 {
        return Err(ApiError::BadRequest("L must be at least 1".into()));
    }
    let proposals = xtopo_core::auto_bind(&source.skeleton, &target.skeleton, length, q.top_k.unwrap_or(5)).map_err(Error::from)?;
    let named = pipeline::name_proposals(&proposals, &source.skeleton, &target.skeleton);
    let set = xtopo_core::correspondence::proposals_to_bindings(&proposals, true);
    let bindings = BindingFile::from_binding_set(&set, &source.skeleton, &target.skeleton);
    Ok(Json(json!({ "proposals": named, "bindings": bindings })))
}

async fn get_bindings(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<BindingFile>> {
    let (_, session) = app.session(&id)?;
    let s = session.lock().await;
    s.bindings
        .clone()
        .map(Json)
        .ok_or_else(|| ApiError::Conflict("NoBindings", "no bindings set".into()))
}

async fn put_bindings(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let (n, session) = app.session(&id)?;
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::BadRequest("body is not UTF-8".into()))?;
    let file = BindingFile::from_json(text).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let mut s = session.lock().await;
    let resolved = file.resolve(&s.source()?.skeleton, &s.targets()?[0].skeleton).map_err(Error::from)?;
    let rate = xtopo_core::metrics::binding_rate(
        resolved.bindings.len(),
        s.source()?.skeleton.joint_count(),
        s.targets()?[0].skeleton.joint_count(),
    );
    s.bindings = Some(file);
    s.result = None;
    app.save(n, &s)?;
    Ok(Json(json!({ "pairs": resolved.bindings.len(), "binding_rate": rate })))
}

async fn get_config(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<TransferConfig>> {
    let (_, session) = app.session(&id)?;
    let s = session.lock().await;
    Ok(Json(s.config.clone()))
}

async fn put_config(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<TransferConfig>> {
    let (n, session) = app.session(&id)?;
    let config: TransferConfig = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    config.validate().map_err(Error::from)?;
    let mut s = session.lock().await;
    s.config = config.clone();
    s.result = None;
    app.save(n, &s)?;
    Ok(Json(config))
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TransferRequest {
    variants: Option<usize>,
    copy_bound: bool,
}

async fn run_transfer(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let (_, session) = app.session(&id)?;
    let request: TransferRequest = if body.iter().all(u8::is_ascii_whitespace) {
        TransferRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?
    };
    let variants = request.variants.unwrap_or(1);
    if variants == 0 {
        return Err(ApiError::BadRequest("variants must be at least 1".into()));
    }
    // The lock is held for the whole job so the session cannot change under it.
    let mut s = session.lock().await;
    let source = s.source()?.clone();
    let targets = s.targets()?.to_vec();
    let file = s
        .bindings
        .clone()
        .ok_or_else(|| ApiError::Conflict("NoBindings", "set bindings before transferring".into()))?;
    let config = s.config.clone();
    let outcome = tokio::task::spawn_blocking(move || -> Result<Outcome, Error> {
        let resolved = file.resolve(&source.skeleton, &targets[0].skeleton)?;
        let run = pipeline::run_transfer(&source, &targets, &resolved, &config, variants, request.copy_bound)?;
        let report = pipeline::evaluate(&source, &targets, &resolved, &run)?;
        Ok(Outcome { run, report })
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    s.jobs += 1;
    let body = json!({
        "job": s.jobs.to_string(),
        "status": "done",
        "energy": outcome.run.results.iter().map(|r| r.energy.clone()).collect::<Vec<_>>(),
        "levels": outcome.run.results[0].levels,
        "frames": outcome.run.results[0].motion.frames(),
        "variants": outcome.run.results.len(),
        "seconds": outcome.run.seconds,
    });
    s.result = Some(outcome);
    Ok(Json(body))
}

async fn job_status(
    State(app): State<Arc<AppState>>,
    UrlPath((id, job)): UrlPath<(String, String)>,
) -> ApiResult<Json<serde_json::Value>> {
    let (_, session) = app.session(&id)?;
    let s = session.lock().await;
    match job.parse::<u64>() {
        Ok(j) if j >= 1 && j <= s.jobs => Ok(Json(json!({ "job": job, "status": "done" }))),
        _ => Err(ApiError::NotFound(format!("no job {job}"))),
    }
}

#[derive(Deserialize)]
struct FramesQuery {
    from: Option<usize>,
    to: Option<usize>,
    /// Which target example to include.
    target: Option<usize>,
    /// Which variant of the result.
    variant: Option<usize>,
}

#[derive(Serialize)]
struct Track {
    joints: Vec<String>,
    parents: Vec<Option<usize>>,
    /// Frame range actually covered, `[from, to)`.
    from: usize,
    to: usize,
    positions: Vec<Vec<[f64; 3]>>,
}

fn track(c: &Character, positions: Vec<Vec<[f64; 3]>>, from: usize, to: usize) -> Track {
    let to = to.min(positions.len());
    let from = from.min(to);
    Track {
        joints: c.skeleton.names().iter().map(|s| s.to_string()).collect(),
        parents: c.skeleton.parents(),
        from,
        to,
        positions: positions[from..to].to_vec(),
    }
}

/// FK joint positions of source, result and one target example over the
/// frame range `[from, to)` of the result.
async fn result_frames(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<FramesQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let (_, session) = app.session(&id)?;
    let s = session.lock().await;
    let outcome = s.outcome()?;
    let variant = q.variant.unwrap_or(0);
    let result = &outcome
        .run
        .results
        .get(variant)
        .ok_or_else(|| ApiError::BadRequest(format!("no variant {variant}")))?
        .motion;
    let frames = result.frames();
    let from = q.from.unwrap_or(0);
    let to = q.to.unwrap_or(frames);
    if from > to {
        return Err(ApiError::BadRequest(format!("from {from} is after to {to}")));
    }
    if to > frames {
        return Err(ApiError::BadRequest(format!("to {to} is past the last frame ({frames} frames)")));
    }
    let ti = q.target.unwrap_or(0);
    let target = s
        .targets
        .get(ti)
        .ok_or_else(|| ApiError::BadRequest(format!("no target example {ti}")))?;
    let source = s.source()?;
    Ok(Json(json!({
        "fps": result.fps,
        "from": from,
        "to": to,
        "source": track(source, source.positions(&source.motion)?, from, to),
        "result": track(target, target.positions(result)?, from, to),
        "target": track(target, target.positions(&target.motion)?, from, to),
    })))
}

#[derive(Deserialize)]
struct VariantQuery {
    variant: Option<usize>,
}

async fn result_bvh(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<VariantQuery>,
) -> ApiResult<Response> {
    let (_, session) = app.session(&id)?;
    let s = session.lock().await;
    let outcome = s.outcome()?;
    let variant = q.variant.unwrap_or(0);
    let result = outcome
        .run
        .results
        .get(variant)
        .ok_or_else(|| ApiError::BadRequest(format!("no variant {variant}")))?;
    let text = pipeline::result_bvh(&s.targets()?[0], &result.motion)?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/plain; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"result.bvh\""),
        ],
        text,
    )
        .into_response())
}

async fn result_metrics(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<Report>> {
    let (_, session) = app.session(&id)?;
    let s = session.lock().await;
    Ok(Json(s.outcome()?.report.clone()))
}
