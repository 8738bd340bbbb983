//! Command-line driver: parses a strict TOML run configuration, applies
//! flag/environment overrides and dispatches to the library.

mod config;
mod runner;

use anyhow::{Context, Result};
use clap::Parser;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "rydpar",
    about = "Parity phase gate pulse synthesis and noise analysis for Rydberg atom arrays",
    version
)]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (also RYDPAR_THREADS; default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() {
    let args = Args::parse();
    if let Err(err) = try_main(args) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn try_main(args: Args) -> Result<()> {
    let threads = args.threads.or_else(|| {
        std::env::var("RYDPAR_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }

    let mut config = config::parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(output) = args.output {
        config.output_dir = output.display().to_string();
    }
    runner::run(&config)
}
