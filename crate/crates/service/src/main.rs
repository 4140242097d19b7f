use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use negotiator_service::headless::{render_summary, replay_transcript, run_headless};
use negotiator_service::server::{router, AppState};
use negotiator_service::store::RunConfig;

#[derive(Parser)]
#[command(name = "negotiator", version, about = "Negotiation support with fairness analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a session between builtin strategies to the end.
    Sim {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: u64,
        /// Directory for config, transcript, change log and analytics.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a transcript against the config and change log beside it.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "NEGOTIATOR_DATA_DIR", default_value = "data")]
        data: PathBuf,
        /// Ends a session when the human to move has not acted for this long.
        #[arg(long, value_name = "SECONDS")]
        human_timeout: Option<u64>,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Sim { config, seed, out } => {
            let mut run = RunConfig::load(&config)?;
            run.session.seed = seed;
            let summary = run_headless(&run, &out)?;
            print!("{}", render_summary(&summary));
        }
        Command::Replay { transcript } => {
            let replayed = replay_transcript(&transcript)?;
            print!("{}", render_summary(&replayed.summary));
            if replayed.verified {
                println!("replay matches the recorded analytics");
            } else {
                println!("no recorded analytics to compare against");
            }
        }
        Command::Serve {
            port,
            host,
            data,
            human_timeout,
        } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let state = AppState::open(&data, human_timeout.map(Duration::from_secs))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .with_context(|| format!("binding {host}:{port}"))?;
                tracing::info!("listening on {}", listener.local_addr()?);
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}
