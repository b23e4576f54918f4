use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use edtm_service::{router, AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "edtm-service", version, about = "Topic-assignment session service")]
struct Args {
    /// TOML config file. EDTM_PORT and EDTM_DATA_DIR override it.
    #[arg(long, env = "EDTM_CONFIG")]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();
    let mut config = match &args.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    config.apply_env(|k| std::env::var(k).ok())?;
    config.validate()?;

    let addr = format!("{}:{}", config.host, config.port);
    let data_dir = config.data_dir.clone();
    let state = AppState::open(config).context("opening data directory")?;
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on {addr}, data in {}", data_dir.display());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
