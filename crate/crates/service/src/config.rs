use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use elicit_core::model::Hyperparameters;
use elicit_core::serial;

use crate::error::ServiceError;
use crate::http::router;
use crate::store::SessionStore;

/// Server settings, read from flags or the environment.
#[derive(Debug, Clone, clap::Args)]
pub struct ServeArgs {
    /// Address to listen on.
    #[arg(long, env = "ELICIT_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Directory holding one JSON file per session.
    #[arg(long, env = "ELICIT_DATA_DIR", default_value = "sessions")]
    pub data_dir: PathBuf,
    /// Hyperparameters used when a session does not bring its own.
    /// Defaults to the review-data settings.
    #[arg(long, env = "ELICIT_HYPERPARAMETERS")]
    pub hyperparameters: Option<PathBuf>,
}

impl ServeArgs {
    pub fn default_hyperparameters(&self) -> Result<Hyperparameters, ServiceError> {
        match &self.hyperparameters {
            Some(path) => serial::load(path).map_err(ServiceError::Invalid),
            None => Ok(Hyperparameters::review_data()),
        }
    }
}

/// Runs the server until ctrl-c.
pub async fn serve(args: ServeArgs) -> Result<(), ServiceError> {
    let store = SessionStore::open(&args.data_dir, args.default_hyperparameters()?)?;
    let app = router(Arc::new(store));
    let listener = tokio::net::TcpListener::bind(args.listen)
        .await
        .map_err(|e| ServiceError::Storage(e.into()))?;
    tracing::info!(addr = %args.listen, dir = %args.data_dir.display(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Storage(e.into()))
}
