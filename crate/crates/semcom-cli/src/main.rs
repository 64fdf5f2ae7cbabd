//! Batch front-end for the semantic-communication simulation pipeline:
//! prepare corpus artifacts, train and finetune the transceiver, sweep
//! interferer counts, and plot the resulting CSVs.

mod commands;
mod config;
mod manifest;
mod plot;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use semcom_core::exec::{self, ExecMode};

use crate::plot::PlotKind;

#[derive(Parser)]
#[command(
    name = "semcom",
    about = "Text semantic-communication simulation: corpus prep, transceiver \
             training, interference sweeps, plots",
    after_help = "Artifacts land in the configured output directory; the \
                  SEMCOM_OUT_ROOT environment variable re-roots relative \
                  output directories. Training drops any final partial \
                  batch, so every step sees exactly batch_size rows."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for data-parallel stages (1 forces sequential).
    #[arg(long, global = true)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory from the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Clean the raw corpus, trim its vocabulary, fit the tokenizer, split,
    /// and vectorize.
    Prep(RunArgs),
    /// Train the transceiver on the prepared artifacts.
    Train(RunArgs),
    /// Resume training from the best checkpoint at the finetuning rate.
    Finetune(RunArgs),
    /// Estimate p(eta_min) across the configured interferer counts.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to evaluate (default: checkpoint-best.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also write the per-slot trace CSV.
        #[arg(long)]
        trace: bool,
    },
    /// Render a history or sweep CSV as an SVG line plot.
    Plot {
        /// Input CSV (training history or sweep output).
        #[arg(long)]
        input: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        /// For histories: which metric pair to draw.
        #[arg(long, default_value = "loss")]
        metric: String,
        /// Overwrite an existing output file.
        #[arg(long)]
        force: bool,
    },
}

/// Resolves the effective output directory: --out wins; otherwise the
/// config's out_dir, re-rooted under SEMCOM_OUT_ROOT when that is set and
/// the configured path is relative.
fn resolve_out_dir(cli_out: Option<PathBuf>, configured: &PathBuf) -> PathBuf {
    if let Some(out) = cli_out {
        return out;
    }
    match std::env::var_os("SEMCOM_OUT_ROOT") {
        Some(root) if configured.is_relative() => PathBuf::from(root).join(configured),
        _ => configured.clone(),
    }
}

fn apply_parallelism(parallelism: Option<usize>) -> Result<ExecMode> {
    match parallelism {
        Some(0) => anyhow::bail!("--parallelism must be at least 1"),
        Some(1) => {
            exec::set_default_mode(ExecMode::Sequential);
            Ok(ExecMode::Sequential)
        }
        Some(n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .ok();
            exec::set_default_mode(ExecMode::Parallel);
            Ok(ExecMode::Parallel)
        }
        None => Ok(exec::default_mode()),
    }
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let mode = apply_parallelism(cli.parallelism)?;

    match cli.command {
        Command::Prep(args) => {
            let loaded = config::load_config(&args.config)?;
            let out = resolve_out_dir(args.out, &loaded.config.run.out_dir);
            let seed = args.seed.unwrap_or(loaded.config.run.seed);
            commands::cmd_prep(&loaded, &out, seed, args.force)
        }
        Command::Train(args) => {
            let loaded = config::load_config(&args.config)?;
            let out = resolve_out_dir(args.out, &loaded.config.run.out_dir);
            let seed = args.seed.unwrap_or(loaded.config.run.seed);
            commands::cmd_train(&loaded, &out, seed, args.force)
        }
        Command::Finetune(args) => {
            let loaded = config::load_config(&args.config)?;
            let out = resolve_out_dir(args.out, &loaded.config.run.out_dir);
            let seed = args.seed.unwrap_or(loaded.config.run.seed);
            commands::cmd_finetune(&loaded, &out, seed, args.force)
        }
        Command::Sweep { run, checkpoint, trace } => {
            let loaded = config::load_config(&run.config)?;
            let out = resolve_out_dir(run.out, &loaded.config.run.out_dir);
            let seed = run.seed.unwrap_or(loaded.config.run.seed);
            commands::cmd_sweep(&loaded, &out, seed, run.force, checkpoint, trace, mode)
        }
        Command::Plot { input, out, metric, force } => {
            let kind = match metric.as_str() {
                "loss" => PlotKind::Loss,
                "accuracy" => PlotKind::Accuracy,
                other => anyhow::bail!("unknown metric {other:?} (expected loss or accuracy)"),
            };
            commands::cmd_plot(&input, &out, kind, force).context("plot failed")
        }
    }
}
