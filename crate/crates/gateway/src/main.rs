use std::path::PathBuf;

use aaosa_gateway::Gateway;
use clap::Parser;

/// Serve map demo sessions over HTTP and WebSocket.
#[derive(Parser)]
#[command(name = "aaosa-gateway", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Where per-user knowledge bases are read and written.
    #[arg(long, default_value = "kb")]
    kb_dir: PathBuf,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt::init();
    let args = Args::parse();
    let app = Gateway::new(args.kb_dir).router();
    let listener = tokio::net::TcpListener::bind(&args.addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
