//! `ctseg train`: fit the classifier on a labeled manifest, writing a
//! checkpoint and a per-step training log.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use ctseg::classifier::{
    embed_and_sequence, save_checkpoint, FeatureMode, StepRecord, TrainSample, Trainer,
};
use ctseg::volume::load_scan;
use ctseg::Mask;

use crate::config::RunConfig;
use crate::manifest::load_labeled_manifest;
use crate::Outcome;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled manifest: one `<scan_dir>\t<label>` line per scan.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Train on raw slices without applying segmentation masks.
    #[arg(long)]
    pub unsegmented: bool,

    /// Directory holding `<scan_id>/<index>.mask.png` files
    /// (default: the output root).
    #[arg(long)]
    pub masks_root: Option<PathBuf>,

    /// Checkpoint output path (default: `<output_root>/model.ckpt`).
    #[arg(long)]
    pub checkpoint_out: Option<PathBuf>,

    /// Training log output path (default: `<output_root>/train_log.tsv`).
    #[arg(long)]
    pub log_out: Option<PathBuf>,

    /// Override the configured step count.
    #[arg(long)]
    pub steps: Option<usize>,

    /// Override the configured learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,

    /// Override the configured batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

pub fn render_log(records: &[StepRecord]) -> String {
    let mut out = String::from("step\tloss\tlr\n");
    for r in records {
        let _ = writeln!(out, "{}\t{:.6}\t{:.6}", r.step, r.loss, r.lr);
    }
    out
}

pub fn run(cfg: &RunConfig, args: TrainArgs) -> Result<Outcome> {
    let entries = load_labeled_manifest(&args.manifest, &cfg.run.data_root)?;
    let classifier_cfg = cfg.classifier_config()?;
    let steps = args.steps.unwrap_or(cfg.training.steps);
    let lr = args.learning_rate.unwrap_or(cfg.training.learning_rate);
    let batch_size = args.batch_size.unwrap_or(cfg.training.batch_size);
    let masks_root = args
        .masks_root
        .clone()
        .unwrap_or_else(|| cfg.run.output_root.clone());

    let mut trainer = Trainer::new(classifier_cfg.clone(), cfg.run.seed)
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    // Slice features are extracted once per scan with the frozen extractor;
    // dropout is re-drawn per step inside the trainer.
    let mut dataset = Vec::with_capacity(entries.len());
    for entry in &entries {
        let volume = load_scan(&entry.dir, Some(entry.label))
            .with_context(|| format!("loading scan {}", entry.scan_id))?;
        let masks: Vec<Mask> = if args.unsegmented {
            let (h, w) = volume.slices()[0].dims();
            vec![Mask::full(h, w); volume.len()]
        } else {
            super::segment::load_masks_for_scan(&masks_root, &entry.scan_id, volume.len())?
        };
        let features = embed_and_sequence(
            &volume,
            &masks,
            &classifier_cfg,
            &trainer.params.extractor,
            FeatureMode::Inference,
            cfg.run.workers,
        )
        .map_err(|e| anyhow::anyhow!("scan {}: {e}", entry.scan_id))?;
        dataset.push(TrainSample {
            features,
            label: entry.label.index(),
        });
    }

    let mut log = Vec::with_capacity(steps);
    for step in 0..steps {
        let loss = trainer
            .step(&dataset, lr, batch_size, cfg.run.workers)
            .map_err(|e| anyhow::anyhow!("step {step}: {e}"))?;
        log.push(StepRecord { step, loss, lr });
    }

    fs::create_dir_all(&cfg.run.output_root)
        .with_context(|| format!("creating {}", cfg.run.output_root.display()))?;
    let ckpt_path = args
        .checkpoint_out
        .clone()
        .unwrap_or_else(|| cfg.run.output_root.join("model.ckpt"));
    save_checkpoint(&ckpt_path, &classifier_cfg, &trainer.params)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let log_path = args
        .log_out
        .clone()
        .unwrap_or_else(|| cfg.run.output_root.join("train_log.tsv"));
    fs::write(&log_path, render_log(&log))
        .with_context(|| format!("writing {}", log_path.display()))?;

    let first = log.first().map(|r| r.loss).unwrap_or(0.0);
    let last = log.last().map(|r| r.loss).unwrap_or(0.0);
    println!(
        "train: {} scans, {steps} steps, loss {first:.4} -> {last:.4}",
        dataset.len()
    );
    println!("train: checkpoint {}", ckpt_path.display());
    println!("train: log {}", log_path.display());
    Ok(Outcome::Clean)
}
