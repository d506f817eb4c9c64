//! HTTP interface to a running simulation.
//!
//! | method | path                  | purpose                                   |
//! |--------|-----------------------|-------------------------------------------|
//! | GET    | `/api/status`         | latest snapshot: nodes, units, tree edges |
//! | GET    | `/api/readings`       | stored readings, raw or bucketed          |
//! | POST   | `/api/setpoint`       | operator target for one unit or `all`     |
//! | GET    | `/api/events`         | event log after a cursor                  |
//! | GET    | `/api/events/stream`  | the same log as server-sent events        |
//!
//! Response bodies are described by `schema/api.schema.json`.

pub mod engine;
pub mod routes;
pub mod state;

pub use engine::run_paced;
pub use routes::router;
pub use state::{Publisher, SequencedEvent, Shared};

use std::future::Future;
use std::sync::Arc;

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    shared: Arc<Shared>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(shared))
        .with_graceful_shutdown(shutdown)
        .await
}
