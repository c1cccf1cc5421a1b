//! `ctseg segment`: per-scan mask files plus a status report.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use ctseg::pipeline::segment_volume;
use ctseg::volume::{load_scan, natural_cmp, save_mask};

use crate::config::RunConfig;
use crate::Outcome;

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Scan directories (relative paths resolve against the data root).
    /// With none given, every subdirectory of the data root is processed.
    pub scans: Vec<PathBuf>,
}

pub fn run(cfg: &RunConfig, args: SegmentArgs) -> Result<Outcome> {
    let (segmenter, embedder) = super::build_backends(cfg)?;
    let pipeline_cfg = cfg.pipeline_config()?;
    let data_root = &cfg.run.data_root;
    if !data_root.exists() {
        bail!("data root {} does not exist", data_root.display());
    }
    let scan_dirs: Vec<PathBuf> = if args.scans.is_empty() {
        let mut dirs: Vec<PathBuf> = fs::read_dir(data_root)
            .with_context(|| format!("listing {}", data_root.display()))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort_by(|a, b| {
            let na = a.file_name().and_then(|n| n.to_str()).unwrap_or("");
            let nb = b.file_name().and_then(|n| n.to_str()).unwrap_or("");
            natural_cmp(na, nb)
        });
        dirs
    } else {
        args.scans
            .iter()
            .map(|p| if p.is_absolute() { p.clone() } else { data_root.join(p) })
            .collect()
    };
    if scan_dirs.is_empty() {
        bail!("no scan directories under {}", data_root.display());
    }

    let mut failures: Vec<(String, String)> = Vec::new();
    let mut processed = 0usize;
    for dir in &scan_dirs {
        let scan_id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("scan")
            .to_string();
        let result = (|| -> Result<usize> {
            let volume = load_scan(dir, None)?;
            let (masks, report) = segment_volume(
                &volume,
                segmenter.as_ref(),
                embedder.as_ref(),
                &pipeline_cfg,
                cfg.run.workers,
            )?;
            let out_dir = cfg.run.output_root.join(&scan_id);
            fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            for (i, mask) in masks.iter().enumerate() {
                save_mask(mask, &out_dir.join(format!("{i}.mask.png")))?;
            }
            fs::write(out_dir.join("status.tsv"), report.to_tsv())
                .with_context(|| format!("writing status for {scan_id}"))?;
            Ok(report.flagged())
        })();
        match result {
            Ok(flagged) => {
                processed += 1;
                let note = if flagged > 0 {
                    format!(" ({flagged} slices flagged no_candidates)")
                } else {
                    String::new()
                };
                println!("segment {scan_id}: ok{note}");
            }
            Err(e) => {
                eprintln!("segment {scan_id}: failed: {e:#}");
                failures.push((scan_id, format!("{e:#}")));
            }
        }
    }
    println!(
        "segment: {processed} scans processed, {} failed",
        failures.len()
    );
    if !failures.is_empty() {
        eprintln!("failed scans:");
        for (id, reason) in &failures {
            eprintln!("  {id}: {reason}");
        }
        if processed == 0 {
            bail!("all scans failed");
        }
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Clean)
}

/// Load per-slice masks produced by `segment` for a scan directory, in the
/// same natural slice order used at load time.
pub fn load_masks_for_scan(
    masks_root: &std::path::Path,
    scan_id: &str,
    n_slices: usize,
) -> Result<Vec<ctseg::Mask>> {
    let dir = masks_root.join(scan_id);
    let mut masks = Vec::with_capacity(n_slices);
    for i in 0..n_slices {
        let path = dir.join(format!("{i}.mask.png"));
        if !path.exists() {
            bail!(
                "mask {} missing; run `segment` first or pass --unsegmented",
                path.display()
            );
        }
        masks.push(ctseg::volume::load_mask(&path)?);
    }
    Ok(masks)
}
