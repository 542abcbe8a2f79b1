//! HTTP interface for live labeling sessions.
//!
//! Every session lives in memory behind its own mutex and is written to
//! `{sessions_dir}/{id}.json` after each state change, so a restarted server
//! resumes where it stopped.

mod api;
mod error;
mod store;

use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;

pub use error::{ApiError, ErrorBody};
pub use store::{LoadFailure, SessionFile, Store};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Root for dataset locators and `/files/...` references.
    pub data_dir: PathBuf,
    pub sessions_dir: PathBuf,
}

impl ServiceConfig {
    /// Sessions are kept in `{data_dir}/sessions`.
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        let data_dir = data_dir.into();
        let sessions_dir = data_dir.join("sessions");
        Self { data_dir, sessions_dir }
    }
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    store: Store,
}

impl AppState {
    /// Opens the session directory and restores saved sessions. Files that
    /// fail to load are skipped and reported.
    pub fn open(config: ServiceConfig) -> io::Result<(Self, Vec<LoadFailure>)> {
        let (store, failures) = Store::open(&config.sessions_dir)?;
        Ok((Self { inner: Arc::new(Inner { config, store }) }, failures))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(api::create_session).get(api::list_sessions))
        .route("/sessions/{id}/display", get(api::get_display))
        .route("/sessions/{id}/labels", post(api::post_labels))
        .route("/sessions/{id}/metrics", get(api::get_metrics))
        .route("/sessions/{id}/state", get(api::get_state))
        .route("/files/{*path}", get(api::get_file))
        .fallback(api::fallback)
        .with_state(state)
}

pub async fn serve(listener: TcpListener, state: AppState) -> io::Result<()> {
    axum::serve(listener, router(state)).await
}
