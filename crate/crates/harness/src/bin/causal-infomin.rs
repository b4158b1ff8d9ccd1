//! Command-line entry point.

use clap::{Parser, Subcommand};
use harness::commands::{self, Log};
use harness::config::{load_config, ExperimentConfig};
use harness::layout::{resolve_output_dir, OutputLayout, OUT_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "causal-infomin",
    version,
    about = "Bias injection, ATE-D / TE-D debiasing and audits on a synthetic two-modality task",
    after_help = format!("The {OUT_ENV} environment variable sets the output directory when --out is not given.")
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate and save the dataset splits.
    GenerateData,
    /// Train the biased baseline on saved data.
    TrainBaseline,
    /// Train ATE-D (standard, inverted and plain weighting) from the saved baseline.
    RunAteD,
    /// Train TE-D from the saved baseline.
    RunTeD,
    /// Evaluate saved checkpoints and write per-seed audit files.
    Audit,
    /// Aggregate per-seed audits into the report files.
    Report,
    /// Run every stage for every seed.
    RunAll,
}

fn run(cli: Cli) -> harness::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    cfg.validate()?;
    let layout = OutputLayout::new(resolve_output_dir(cli.out.as_deref(), &cfg.output_dir));
    let log = Log { quiet: cli.quiet };
    match cli.command {
        Command::GenerateData => commands::generate_data(&cfg, &layout, log),
        Command::TrainBaseline => commands::train_baseline(&cfg, &layout, log),
        Command::RunAteD => commands::run_ate_d(&cfg, &layout, log),
        Command::RunTeD => commands::run_te_d(&cfg, &layout, log),
        Command::Audit => commands::audit(&cfg, &layout, log),
        Command::Report => commands::report(&cfg, &layout, log).map(|_| ()),
        Command::RunAll => commands::run_all(&cfg, &layout, log).map(|_| ()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
