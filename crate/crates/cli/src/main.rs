//! Batch CLI: segment scan volumes, train and evaluate the classifier, and
//! emit overlay comparison panels.
//!
//! Exit codes: 0 on success, 1 when some scans failed but others were
//! processed, 2 on usage or configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use ctseg_cli::commands;
use ctseg_cli::config::RunConfig;
use ctseg_cli::Outcome;

#[derive(Debug, Parser)]
#[command(name = "ctseg", version, about = "CT scan segmentation and classification")]
struct Cli {
    #[command(flatten)]
    overrides: GlobalOverrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags beat environment variables, which beat the config file, which beats
/// built-in defaults.
#[derive(Debug, Args)]
struct GlobalOverrides {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every stochastic choice (init, dropout, shuffling).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker count for per-slice and per-sample fan-out.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Root directory of scan directories.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,

    /// Root directory for outputs (masks, reports, checkpoints).
    #[arg(long, global = true)]
    output_root: Option<PathBuf>,

    /// Backend selector: `fake` or `checkpoint:<path>`.
    #[arg(long, global = true)]
    backend: Option<String>,

    /// Fake-backend configuration file.
    #[arg(long, global = true)]
    fake_config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment scan volumes into per-slice lung masks.
    Segment(commands::segment::SegmentArgs),
    /// Train the classifier from a labeled manifest.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint against a labeled manifest.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Write side-by-side original/masked panels.
    Overlay(commands::overlay::OverlayArgs),
}

fn build_config(overrides: &GlobalOverrides) -> Result<RunConfig> {
    let mut cfg = match &overrides.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_env_overrides()?;
    if let Some(seed) = overrides.seed {
        cfg.run.seed = seed;
    }
    if let Some(workers) = overrides.workers {
        cfg.run.workers = workers;
    }
    if let Some(root) = &overrides.data_root {
        cfg.run.data_root = root.clone();
    }
    if let Some(root) = &overrides.output_root {
        cfg.run.output_root = root.clone();
    }
    if let Some(backend) = &overrides.backend {
        cfg.run.backend = backend.clone();
    }
    if let Some(path) = &overrides.fake_config {
        cfg.run.fake_config = Some(path.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Outcome> {
    let cfg = build_config(&cli.overrides)?;
    match cli.command {
        Command::Segment(args) => commands::segment::run(&cfg, args),
        Command::Train(args) => commands::train::run(&cfg, args),
        Command::Evaluate(args) => commands::evaluate::run(&cfg, args),
        Command::Overlay(args) => commands::overlay::run(&cfg, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
