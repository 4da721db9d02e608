//! Session-based HTTP API over the segmentation engine.
//!
//! Each session owns a loaded scene, the active 2D mask, the active 3D
//! selection, queued reference masks, finished autoseg jobs and an undo
//! history. Requests on one session are serialized by its lock; engine work
//! runs on the blocking pool so distinct sessions proceed concurrently.

pub mod api;
pub mod error;
pub mod extract;
pub mod overlay;
pub mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::DefaultBodyLimit;
use axum::routing::{delete, get, post};
use axum::Router;
use gsseg_core::eval::ProviderSpec;
use gsseg_core::GaussianScene;
use tokio::sync::Mutex;

pub use api::parse_registry;
pub use error::{ApiError, ApiResult};
use session::Session;

const BODY_LIMIT: usize = 256 << 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_sessions: usize,
    /// Provider names usable in autoseg requests besides literal specs.
    pub providers: HashMap<String, ProviderSpec>,
    /// Where command providers get their job directories.
    pub work_dir: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_sessions: 16,
            providers: HashMap::new(),
            work_dir: std::env::temp_dir().join("gsseg-jobs"),
        }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            sessions: RwLock::new(HashMap::new()),
        })
    }

    pub fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session table poisoned").len()
    }

    fn insert_session(&self, scene: GaussianScene) -> ApiResult<String> {
        let mut table = self.sessions.write().expect("session table poisoned");
        if table.len() >= self.config.max_sessions {
            return Err(ApiError::unavailable(format!(
                "session limit of {} reached",
                self.config.max_sessions
            )));
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        table.insert(
            id.clone(),
            Arc::new(Mutex::new(Session::new(id.clone(), scene))),
        );
        Ok(id)
    }

    fn remove_session(&self, id: &str) -> ApiResult<()> {
        self.sessions
            .write()
            .expect("session table poisoned")
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    /// Registry names first, then literal provider specs.
    pub fn resolve_provider(&self, name: &str) -> ApiResult<ProviderSpec> {
        if let Some(spec) = self.config.providers.get(name) {
            return Ok(spec.clone());
        }
        name.parse()
            .map_err(|e: gsseg_core::Error| ApiError::bad_request("provider", e.to_string()))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    use api::*;
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info).delete(delete_session))
        .route("/sessions/{id}/render", post(render))
        .route(
            "/sessions/{id}/mask",
            get(get_mask).put(put_mask).delete(clear_mask),
        )
        .route("/sessions/{id}/mask/paint", post(paint))
        .route("/sessions/{id}/mask/box", post(box_select))
        .route(
            "/sessions/{id}/references",
            post(add_reference).delete(clear_references),
        )
        .route("/sessions/{id}/project", post(project))
        .route("/sessions/{id}/autoseg", post(autoseg))
        .route("/sessions/{id}/jobs/{job}", get(job_info))
        .route("/sessions/{id}/jobs/{job}/frames/{k}", get(job_frame))
        .route(
            "/sessions/{id}/jobs/{job}/corrections",
            post(add_correction),
        )
        .route(
            "/sessions/{id}/jobs/{job}/corrections/{cid}",
            delete(remove_correction),
        )
        .route("/sessions/{id}/selection", get(get_selection))
        .route("/sessions/{id}/selection/combine", post(combine))
        .route("/sessions/{id}/orient", post(orient))
        .route("/sessions/{id}/export", post(export))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/redo", post(redo))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}
