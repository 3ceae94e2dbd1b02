//! Live labeling sessions over HTTP/JSON.
//!
//! A session runs the sampling loop with a person as the teacher: the
//! client asks for a batch, labels every document in it, and the service
//! retrains. All endpoints live under `/v1`; errors are `{code, message}`
//! objects with 409 for state conflicts and 422 for label sets that do not
//! match the pending batch.

mod api;
pub mod session;
pub mod store;

pub use api::{router, AppState, ErrorBody, ServiceConfig, EXHAUSTED_HEADER, REMAINING_HEADER};
pub use session::{
    BatchItem, CorpusEntry, CreateSession, MetricsReport, SeedExample, Session, SessionConfig,
    SessionError, SessionEvent, SessionStatus, SessionView, TrainingSummary,
};
pub use store::EventStore;

use std::future::Future;

/// Serves until `shutdown` resolves. Every session mutation is already on
/// disk when its request returns, so stopping loses nothing.
pub async fn serve(
    listener: tokio::net::TcpListener,
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), SessionError> {
    let state = AppState::new(&config)?;
    let app = router(state, config.ui_dir.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}
