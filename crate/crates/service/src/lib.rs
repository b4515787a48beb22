//! Command-line tools and HTTP API for the no-show risk models.

pub mod api;
pub mod cli;
pub mod error;
pub mod manifest;
pub mod ops;
pub mod store;

pub use error::{ErrorKind, ServiceError, ServiceResult};

/// Run the API until interrupted.
pub fn serve(args: &cli::ServeArgs) -> ServiceResult<()> {
    let store = store::Store::open(&args.data_dir)?;
    let app = api::router(api::AppState::new(store, args.max_training));
    let addr = format!("{}:{}", args.host, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| ServiceError::internal(format!("cannot bind {addr}: {e}")))?;
        log::info!("listening on {addr}, data in {}", args.data_dir.display());
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| ServiceError::internal(format!("server error: {e}")))
    })
}
