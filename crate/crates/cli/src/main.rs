use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nudge_core::study::{report, run_study, write_run, StudyConfig, StudySummary};
use nudge_service::{http, Service, STORE_ENV};

#[derive(Parser)]
#[command(name = "nudge", version, about = "Simulated interruptibility studies and the decision service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Batch studies over simulated users.
    Study {
        #[command(subcommand)]
        command: StudyCommand,
    },
    /// Run the HTTP decision service.
    Serve {
        /// Store directory.
        #[arg(long, env = STORE_ENV)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

#[derive(Subcommand)]
enum StudyCommand {
    /// Simulate a study and write event logs, metrics and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute metrics from an existing run directory.
    Report { dir: PathBuf },
}

fn load_config(path: &Path) -> Result<StudyConfig> {
    let raw = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config: StudyConfig =
        serde_json::from_slice(&raw).with_context(|| format!("parsing {}", path.display()))?;
    // Relative pool paths are relative to the config file.
    if let nudge_core::study::PoolSpec::File { file } = &mut config.pool {
        if file.is_relative() {
            if let Some(dir) = path.parent() {
                *file = dir.join(&*file);
            }
        }
    }
    Ok(config)
}

fn print_summary(summary: &StudySummary) {
    println!(
        "{:<14} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9}",
        "group", "rows", "sent", "answered", "ans_rate", "dis_rate", "accuracy", "reward"
    );
    for g in &summary.groups {
        let name = serde_json::to_value(g.phase).ok().and_then(|v| v.as_str().map(str::to_string));
        println!(
            "{:<14} {:>5} {:>8.1} {:>8.1} {:>8.3} {:>8.3} {:>8.3} {:>9.2}",
            name.unwrap_or_default(),
            g.rows,
            g.sent,
            g.answered,
            g.answer_rate,
            g.dismiss_rate,
            g.accuracy,
            g.reward
        );
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();

    match Cli::parse().command {
        Command::Study {
            command: StudyCommand::Run { config, out, seed },
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let started = Instant::now();
            let result = run_study(&cfg)?;
            tracing::info!(users = cfg.users.len(), weeks = cfg.weeks, elapsed = ?started.elapsed(), "study finished");
            let summary = write_run(&result, &cfg, &out)?;
            print_summary(&summary);
        }
        Command::Study {
            command: StudyCommand::Report { dir },
        } => print_summary(&report(&dir)?),
        Command::Serve { store, bind } => {
            let service = Service::open(&store)?;
            tokio::runtime::Runtime::new()?.block_on(http::serve(service, bind))?;
        }
    }
    Ok(())
}
