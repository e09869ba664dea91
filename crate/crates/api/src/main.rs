use std::path::PathBuf;

use anyhow::Context;
use artiscope::config::Config;
use artiscope_api::Server;
use clap::Parser;

/// Serves the artiscope HTTP API.
#[derive(Debug, Parser)]
#[command(name = "artiscope-server", version)]
struct Args {
    /// Configuration file.
    #[arg(long, env = "ARTISCOPE_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides `server.bind`.
    #[arg(long)]
    bind: Option<String>,
    /// Overrides `server.static_dir`.
    #[arg(long)]
    static_dir: Option<String>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut config = Config::load(args.config.as_deref()).context("loading configuration")?;
    if let Some(bind) = args.bind {
        config.server.bind = bind;
    }
    if let Some(dir) = args.static_dir {
        config.server.static_dir = dir;
    }
    let server = Server::bind(config).await?;
    eprintln!("artiscope listening on http://{}", server.local_addr());
    server
        .run(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
