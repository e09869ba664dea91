//! HTTP facade over artiscope sessions.
//!
//! Artifact ids are only unique within a session, so the `/artifacts/{id}`
//! routes take the owning session as a `session` query parameter.

mod error;
mod routes;
mod state;

use std::future::Future;
use std::net::SocketAddr;

use artiscope::config::{Config, ConfigError};
use artiscope::llm::LlmError;
use axum::Router;
use tokio::net::TcpListener;

pub use error::Failure;
pub use routes::router;
pub use state::AppState;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("chat client: {0}")]
    Llm(#[from] LlmError),
    #[error("server stopped: {0}")]
    Io(#[from] std::io::Error),
}

/// A bound, not yet running service.
pub struct Server {
    listener: TcpListener,
    app: Router,
}

impl Server {
    pub async fn bind(config: Config) -> Result<Self, ServeError> {
        let addr = config.server.bind.clone();
        let state = AppState::from_config(config)?;
        let listener = TcpListener::bind(&addr)
            .await
            .map_err(|source| ServeError::Bind { addr, source })?;
        Ok(Server {
            listener,
            app: router(state),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    /// Serves until `shutdown` resolves, then lets in-flight requests finish.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
        axum::serve(self.listener, self.app)
            .with_graceful_shutdown(shutdown)
            .await?;
        Ok(())
    }
}
