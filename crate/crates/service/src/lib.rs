//! HTTP service for live ballot-polling audits: contest creation with
//! threshold calibration, round-by-round decisions backed by an append-only
//! log, next-round projections, and stateless calibration and evaluation.

pub mod api;
pub mod error;
pub mod routes;
pub mod store;

use std::sync::Arc;

pub use error::ApiError;
pub use routes::router;
pub use store::Store;

/// Serves the API on `listener` until interrupted.
pub async fn serve(listener: tokio::net::TcpListener, store: Arc<Store>) -> std::io::Result<()> {
    axum::serve(listener, router(store))
        .with_graceful_shutdown(shutdown_signal())
        .await
}

async fn shutdown_signal() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        tracing::warn!("cannot listen for interrupts: {e}");
        std::future::pending::<()>().await;
    }
}
