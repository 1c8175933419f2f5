//! HTTP/JSON service over a gazereview store.
//!
//! Every session-scoped response carries `frame_count` and `fps`. Errors are
//! `{"error": kind, "message": ..., "fields": [{"field", "message"}]}` with
//! status 404 (unknown resource), 422 (validation), 409 (stale label version
//! or write-once conflict) or 500.

mod error;
mod handlers;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use gazereview_core::region::{plot_points, PlotIndex, DEFAULT_GRID_RESOLUTION};
use gazereview_core::session::EventMarker;
use gazereview_core::store::{SessionManifest, Store};
use gazereview_core::Result;
use parking_lot::{Mutex, RwLock};
use tokio::net::TcpListener;

pub use error::{ApiError, ApiResult};

/// Immutable per-session data, loaded once and shared by readers.
#[derive(Debug)]
pub(crate) struct CachedSession {
    pub manifest: SessionManifest,
    pub events: Vec<EventMarker>,
    pub trusted: PlotIndex,
    pub all: PlotIndex,
}

impl CachedSession {
    pub fn index(&self, include_untrusted: bool) -> &PlotIndex {
        if include_untrusted {
            &self.all
        } else {
            &self.trusted
        }
    }
}

#[derive(Debug)]
pub struct AppState {
    store: Store,
    grid_resolution: usize,
    sessions: RwLock<HashMap<String, Arc<CachedSession>>>,
    /// Serializes label and vote writes so version checks and the write that
    /// follows are atomic.
    write_lock: Mutex<()>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self::with_grid_resolution(store, DEFAULT_GRID_RESOLUTION)
    }

    pub fn with_grid_resolution(store: Store, grid_resolution: usize) -> Self {
        Self {
            store,
            grid_resolution: grid_resolution.max(1),
            sessions: RwLock::new(HashMap::new()),
            write_lock: Mutex::new(()),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Sessions never change once stored, so the cache needs no invalidation.
    pub(crate) fn session(&self, id: &str) -> Result<Arc<CachedSession>> {
        if let Some(s) = self.sessions.read().get(id) {
            return Ok(s.clone());
        }
        let session = self.store.load_session(id)?;
        let manifest = self.store.load_manifest(id)?;
        let entry = Arc::new(CachedSession {
            trusted: PlotIndex::with_resolution(plot_points(&session, false)?, self.grid_resolution),
            all: PlotIndex::with_resolution(plot_points(&session, true)?, self.grid_resolution),
            events: session.events,
            manifest,
        });
        Ok(self
            .sessions
            .write()
            .entry(id.to_string())
            .or_insert(entry)
            .clone())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    use handlers::*;
    Router::new()
        .route("/api/sessions", get(list_sessions))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/plot", get(get_plot))
        .route("/api/sessions/{id}/region-query", post(post_region_query))
        .route("/api/sessions/{id}/labels/{system}", get(get_labels).put(put_labels))
        .route("/api/sessions/{id}/votes", get(get_votes).post(post_votes))
        .route("/api/sessions/{id}/review-set", get(get_review_set))
        .route("/api/evaluations", post(post_evaluation))
        .route("/api/evaluations/{id}", get(get_evaluation))
        .with_state(state)
}

/// Serves on an already bound listener until the task is cancelled.
pub async fn serve_on(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve_on(listener, state).await
}
