//! `ctseg evaluate`: score a checkpoint against a labeled manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use ctseg::classifier::{classify_scan, load_checkpoint, ClassifierConfig};
use ctseg::metrics::evaluate;
use ctseg::volume::{load_scan, ClassLabel};
use ctseg::Mask;

use crate::config::RunConfig;
use crate::manifest::load_labeled_manifest;
use crate::Outcome;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Trained checkpoint file.
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Labeled manifest: one `<scan_dir>\t<label>` line per scan.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Classify raw slices without applying segmentation masks.
    #[arg(long)]
    pub unsegmented: bool,

    /// Directory holding `<scan_id>/<index>.mask.png` files
    /// (default: the output root).
    #[arg(long)]
    pub masks_root: Option<PathBuf>,

    /// Write the metrics report here as well as to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Optional per-scan prediction dump
    /// (scan_id, probabilities, predicted, true).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

/// Architecture fields must match between the checkpoint and the run config;
/// the dropout keep probability is inference-irrelevant and may differ.
fn check_compatible(run: &ClassifierConfig, ckpt: &ClassifierConfig) -> Result<()> {
    let mut mismatches = Vec::new();
    macro_rules! field {
        ($name:ident) => {
            if run.$name != ckpt.$name {
                mismatches.push(format!(
                    "{}: run {:?} vs checkpoint {:?}",
                    stringify!($name),
                    run.$name,
                    ckpt.$name
                ));
            }
        };
    }
    field!(t);
    field!(rnn_units);
    field!(dense_units);
    field!(num_classes);
    field!(routing);
    field!(feature_dim);
    field!(input_hw);
    if !mismatches.is_empty() {
        bail!(
            "checkpoint is incompatible with the run config:\n  {}",
            mismatches.join("\n  ")
        );
    }
    Ok(())
}

pub fn run(cfg: &RunConfig, args: EvaluateArgs) -> Result<Outcome> {
    let entries = load_labeled_manifest(&args.manifest, &cfg.run.data_root)?;
    let (ckpt_cfg, params) =
        load_checkpoint(&args.checkpoint).map_err(|e| anyhow::anyhow!("{e}"))?;
    let run_cfg = cfg.classifier_config()?;
    check_compatible(&run_cfg, &ckpt_cfg)?;
    let masks_root = args
        .masks_root
        .clone()
        .unwrap_or_else(|| cfg.run.output_root.clone());

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(entries.len());
    let mut dump = String::from("scan_id\tprobabilities\tpredicted\ttrue\n");
    for entry in &entries {
        let volume = load_scan(&entry.dir, Some(entry.label))
            .with_context(|| format!("loading scan {}", entry.scan_id))?;
        let masks: Vec<Mask> = if args.unsegmented {
            let (h, w) = volume.slices()[0].dims();
            vec![Mask::full(h, w); volume.len()]
        } else {
            super::segment::load_masks_for_scan(&masks_root, &entry.scan_id, volume.len())?
        };
        let out = classify_scan(&volume, &masks, &ckpt_cfg, &params, cfg.run.workers)
            .map_err(|e| anyhow::anyhow!("scan {}: {e}", entry.scan_id))?;
        let predicted = out.predicted_class();
        pairs.push((entry.label.index(), predicted));
        let probs = out
            .probabilities()
            .iter()
            .map(|p| format!("{p:.6}"))
            .collect::<Vec<_>>()
            .join(",");
        let predicted_name = ClassLabel::from_index(predicted)
            .map(|l| l.to_string())
            .unwrap_or_else(|| predicted.to_string());
        let _ = writeln!(
            dump,
            "{}\t{}\t{}\t{}",
            entry.scan_id, probs, predicted_name, entry.label
        );
    }

    let report = evaluate(&pairs, &ClassLabel::names());
    let text = report.to_text();
    print!("{text}");
    if let Some(path) = &args.report {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.predictions {
        fs::write(path, &dump).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(Outcome::Clean)
}
