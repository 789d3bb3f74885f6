//! Experiment driver: every subcommand reads one JSON config, runs the
//! corresponding study, and writes CSV reports (plus field or parameter
//! files) into the config's output directory.

mod commands;
mod config;
mod report;

use clap::{Parser, Subcommand};
use config::Experiment;
use report::RunCtx;
use serde::{de::DeserializeOwned, Serialize};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "phasewave",
    version,
    about = "Wave-equation experiments: solves, decompositions, ray flows, network training"
)]
struct Cli {
    /// JSON experiment config (required by every subcommand)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the config's seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the compute pool (0 keeps the library default)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Causal solve of one source; optional modal-oracle cross-check
    Solve,
    /// Iteration error against a converged reference across source amplitudes
    Convergence,
    /// Multi-source interaction terms against their closed forms
    Interaction,
    /// Dyadic decomposition suite: resynthesis, decay, kernel checks, remainders
    Lp,
    /// Ray trajectory with conservation and reversal diagnostics
    Flow,
    /// Fit network parameters to solve data
    Train,
    /// Read coefficients back out of a parameter file
    Reconstruct,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(&cli));
}

fn run(cli: &Cli) -> i32 {
    if cli.threads > 0 {
        // A second build_global in one process is a no-op; fine for tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config is required");
            return 2;
        }
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", path.display());
            return 2;
        }
    };
    let outcome = match cli.cmd {
        Cmd::Solve => dispatch(&text, cli, commands::solve::run),
        Cmd::Convergence => dispatch(&text, cli, commands::convergence::run),
        Cmd::Interaction => dispatch(&text, cli, commands::interaction::run),
        Cmd::Lp => dispatch(&text, cli, commands::lp::run),
        Cmd::Flow => dispatch(&text, cli, commands::flow::run),
        Cmd::Train => dispatch(&text, cli, commands::train::run),
        Cmd::Reconstruct => dispatch(&text, cli, commands::reconstruct::run),
    };
    match outcome {
        Ok(()) => 0,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn dispatch<C>(
    text: &str,
    cli: &Cli,
    cmd: fn(&C, &RunCtx) -> phasewave::Result<()>,
) -> Result<(), (i32, String)>
where
    C: Experiment + Serialize + DeserializeOwned,
{
    let mut cfg: C = serde_json::from_str(text).map_err(|e| (2, format!("config: {e}")))?;
    if let Some(seed) = cli.seed {
        *cfg.seed_mut() = seed;
    }
    if let Some(out) = &cli.out {
        *cfg.out_dir_mut() = out.display().to_string();
    }
    let effective =
        serde_json::to_string(&cfg).map_err(|e| (2, format!("config re-serialization: {e}")))?;
    let ctx = RunCtx {
        out_dir: PathBuf::from(cfg.out_dir()),
        hash: report::config_hash(&effective),
    };
    std::fs::create_dir_all(&ctx.out_dir)
        .map_err(|e| (2, format!("cannot create output directory {}: {e}", ctx.out_dir.display())))?;
    cmd(&cfg, &ctx).map_err(|e| (if e.is_validation() { 2 } else { 3 }, e.to_string()))
}
