//! HTTP/JSON front end of the prover/verifier engine.
//!
//! Long batches run as background jobs: `POST /prove` or `POST /research`
//! returns a job id, and `GET /jobs/{id}?since=n` streams progress events by
//! cursor until the result is attached. The process holds the archive's
//! writer lock for its whole lifetime.

mod error;
mod jobs;
mod routes;
mod state;

use std::future::Future;

use axum::Router;
use tokio::net::TcpListener;

pub use error::{ApiError, StartError};
pub use state::AppState;

pub fn router(state: AppState) -> Router {
    routes::router(state)
}

pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub async fn serve_with_shutdown(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
