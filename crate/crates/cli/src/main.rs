//! `krauskge`: train, evaluate and diagnose Kraus-channel knowledge-graph
//! embeddings.
//!
//! Exit codes: 0 success, 1 property failure, 2 input error, 3 advisory.
//! `KRAUSKGE_THREADS` caps worker parallelism (0 or unset = automatic).

mod checkpoint;
mod commands;
mod config;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use errors::CliResult;

#[derive(Parser)]
#[command(name = "krauskge", version, about = "Knowledge-graph embedding with Kraus channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON-lines training log (one record per epoch).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Filtered-ranking link prediction metrics for a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Break metrics down by relation mapping pattern.
        #[arg(long)]
        stratify: bool,
        /// Report raw (unfiltered) ranks instead of filtered ones.
        #[arg(long)]
        raw: bool,
        /// Also write metrics as JSON-lines records (one per bucket).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Per-relation fan-out / effective-rank diagnostic table.
    Diagnose {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Write the TSV table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compose a relation path and report the resulting channel.
    Compose {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated relation names (or numeric ids).
        #[arg(long)]
        relations: String,
    },
    /// Run the randomized property suites.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Deliberately corrupt one operator (negative control).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Score-equivalence report for a recovered baseline model.
    Recover {
        /// One of: rescal, distmult, rotate, golde.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("KRAUSKGE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, out, log } => commands::train::run(&config, &out, log.as_ref()),
        Command::Eval {
            checkpoint,
            split,
            stratify,
            raw,
            json,
        } => commands::eval::run(&checkpoint, &split, stratify, raw, json.as_ref()),
        Command::Diagnose { checkpoint, out } => commands::diagnose::run(&checkpoint, out.as_ref()),
        Command::Compose {
            checkpoint,
            relations,
        } => commands::compose::run(&checkpoint, &relations),
        Command::Verify { seed, inject_fault } => commands::verify::run(seed, inject_fault),
        Command::Recover {
            model,
            seed,
            dim,
            trials,
        } => commands::recover::run(&model, seed, dim, trials),
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
