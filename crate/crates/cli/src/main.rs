//! `ssmlab`: theorem-check suites, layer analyses, and the recall training
//! pipeline behind one reproducible command-line front end.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or config error.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ssmlab", version, about = "Diagonal state-space model lab")]
struct Cli {
    /// JSON experiment config; flags override file fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV files, reports, and the run manifest.
    #[arg(long, global = true, default_value = "runs/out")]
    out: PathBuf,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Verbosity (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run verification suites.
    Check {
        #[command(subcommand)]
        what: CheckCmd,
    },
    /// One-off analyses over a parameterized layer or stack.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCmd,
    },
    /// Dataset generation.
    Data {
        #[command(subcommand)]
        what: DataCmd,
    },
    /// Training runs.
    Train {
        #[command(subcommand)]
        what: TrainCmd,
    },
    /// Checkpoint evaluation.
    Eval {
        #[command(subcommand)]
        what: EvalCmd,
    },
    /// Robustness probes on trained checkpoints.
    Probe {
        #[command(subcommand)]
        what: ProbeCmd,
    },
}

#[derive(Subcommand)]
enum CheckCmd {
    /// Parallel-form, gradient, decay-envelope, contraction, and low-pass
    /// suites; nonzero exit on any violation.
    Theorems,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Influence matrix and decay fit of a layer on a random input.
    Influence,
    /// Layerwise sharpness probes plus per-layer contraction reports.
    Smoothness,
    /// Frequency-response magnitudes and cutoff verification.
    Spectrum,
    /// Cumulative gate-gap histogram over random inputs.
    GateGap,
}

#[derive(Subcommand)]
enum DataCmd {
    /// Generate a key-value recall dataset (binary container + manifest).
    GenAr,
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Train on generated recall data; writes metrics, checkpoint, eval table.
    Ar,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Evaluate a checkpoint on freshly generated eval splits.
    Ar {
        /// Model checkpoint path.
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Subcommand)]
enum ProbeCmd {
    /// Leading/trailing kv-section corruption probe on a checkpoint.
    Perturb {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    let cfg = config::RunConfig::load(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out)?;
    let ctx = commands::Ctx {
        cfg,
        out: cli.out.clone(),
        seed_flag: cli.seed,
        verbose: cli.verbose,
    };
    match &cli.command {
        Command::Check { what: CheckCmd::Theorems } => commands::check_theorems(&ctx),
        Command::Analyze { what } => {
            match what {
                AnalyzeCmd::Influence => commands::analyze_influence(&ctx)?,
                AnalyzeCmd::Smoothness => commands::analyze_smoothness(&ctx)?,
                AnalyzeCmd::Spectrum => commands::analyze_spectrum(&ctx)?,
                AnalyzeCmd::GateGap => commands::analyze_gate_gap(&ctx)?,
            }
            Ok(0)
        }
        Command::Data { what: DataCmd::GenAr } => {
            commands::data_gen_ar(&ctx)?;
            Ok(0)
        }
        Command::Train { what: TrainCmd::Ar } => {
            commands::train_ar(&ctx)?;
            Ok(0)
        }
        Command::Eval { what: EvalCmd::Ar { checkpoint } } => {
            commands::eval_ar(&ctx, checkpoint)?;
            Ok(0)
        }
        Command::Probe { what: ProbeCmd::Perturb { checkpoint } } => {
            commands::probe_perturb(&ctx, checkpoint)?;
            Ok(0)
        }
    }
}
