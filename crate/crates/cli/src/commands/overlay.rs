//! `ctseg overlay`: side-by-side original/masked comparison panels.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use image::{ImageBuffer, Luma};

use ctseg::volume::{list_slice_files, load_mask, load_scan};

use crate::config::RunConfig;
use crate::Outcome;

/// Gutter between the two panes, in pixels.
pub const GUTTER: usize = 8;
const GUTTER_VALUE: u8 = 128;

#[derive(Debug, Args)]
pub struct OverlayArgs {
    /// Scan directory of grayscale slices.
    #[arg(long)]
    pub scan_dir: PathBuf,

    /// Directory of `<index>.mask.png` files for this scan.
    #[arg(long)]
    pub masks: PathBuf,

    /// Output directory (default: `<output_root>/overlay/<scan_id>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cfg: &RunConfig, args: OverlayArgs) -> Result<Outcome> {
    let scan_dir = &args.scan_dir;
    if list_slice_files(scan_dir).map(|f| f.is_empty()).unwrap_or(true) {
        bail!("no slices in {}", scan_dir.display());
    }
    let scan_id = scan_dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("scan")
        .to_string();
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| cfg.run.output_root.join("overlay").join(&scan_id));
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let volume = load_scan(scan_dir, None)?;
    let mut written = 0usize;
    for (i, slice) in volume.slices().iter().enumerate() {
        let mask_path = args.masks.join(format!("{i}.mask.png"));
        if !mask_path.exists() {
            eprintln!("overlay {scan_id}: slice {i}: missing {}; skipped", mask_path.display());
            continue;
        }
        let mask = load_mask(&mask_path)?;
        if mask.dims() != slice.dims() {
            eprintln!(
                "overlay {scan_id}: slice {i}: mask dims {:?} != slice dims {:?}; skipped",
                mask.dims(),
                slice.dims()
            );
            continue;
        }
        let (h, w) = slice.dims();
        let panel_w = 2 * w + GUTTER;
        let panel = ImageBuffer::from_fn(panel_w as u32, h as u32, |px, py| {
            let (px, py) = (px as usize, py as usize);
            let value = if px < w {
                (slice.get(px, py) * 255.0).round() as u8
            } else if px < w + GUTTER {
                GUTTER_VALUE
            } else {
                let sx = px - w - GUTTER;
                if mask.get(sx, py) {
                    (slice.get(sx, py) * 255.0).round() as u8
                } else {
                    0
                }
            };
            Luma([value])
        });
        let out_path = out_dir.join(format!("{i}.panel.png"));
        panel
            .save(&out_path)
            .with_context(|| format!("writing {}", out_path.display()))?;
        written += 1;
    }
    println!("overlay {scan_id}: {written} panels in {}", out_dir.display());
    Ok(Outcome::Clean)
}
