//! HTTP/JSON service over the composed-adapter engine: inference with any
//! registered method, a dialogue emulator, the method registry with its
//! parameter accounting, and memory and request metrics.
//!
//! Inference is serialised on one worker thread behind a bounded FIFO
//! queue; the accept loop never waits for the model.

pub mod api;
mod app;
pub mod config;
mod error;
mod memory;
mod routes;
mod service;

use std::sync::Arc;

pub use app::AppState;
pub use config::ServerConfig;
pub use error::{ApiError, ServerError};
pub use memory::rss_and_peak;
pub use routes::router;
pub use service::{InferJob, Outcome, Service};

/// The frozen description of the `/v1` API.
pub const OPENAPI: &str = include_str!("../api/openapi.json");

/// Binds, starts loading in the background and serves until Ctrl-C, then
/// drains the queue.
pub async fn run(config: ServerConfig) -> Result<(), ServerError> {
    let addr = format!("{}:{}", config.host, config.port);
    let state = AppState::new(config)?;
    state.init()?;
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(Arc::clone(&state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    let drained = tokio::task::spawn_blocking(move || state.shutdown())
        .await
        .map_err(|e| ServerError::Config(format!("shutdown failed: {e}")))?;
    tracing::info!(drained, "stopped");
    Ok(())
}
