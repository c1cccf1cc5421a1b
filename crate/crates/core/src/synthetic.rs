//! Synthetic phantoms and labeled volumes for tests, benches, and demos.
//!
//! Nothing here ships to production paths; it exists so the whole pipeline
//! can be exercised offline with known geometry and separable labels.

use std::path::Path;

use image::{ImageBuffer, Luma};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::mask::Mask;
use crate::volume::{ClassLabel, ScanVolume, SliceImage, VolumeError};

/// Filled ellipse mask centered at (cx, cy) with semi-axes (rx, ry).
pub fn ellipse_mask(h: usize, w: usize, cx: f64, cy: f64, rx: f64, ry: f64) -> Mask {
    Mask::from_fn(h, w, |x, y| {
        let dx = (x as f64 - cx) / rx;
        let dy = (y as f64 - cy) / ry;
        dx * dx + dy * dy <= 1.0
    })
}

/// Filled disc mask.
pub fn disc_mask(h: usize, w: usize, cx: f64, cy: f64, r: f64) -> Mask {
    ellipse_mask(h, w, cx, cy, r, r)
}

/// Two-lung phantom: a slice containing two ellipse "lungs" and a central
/// blob, plus the part masks a segment-everything pass would emit for it.
pub struct Phantom {
    pub slice: SliceImage,
    pub right_lung: Mask,
    pub left_lung: Mask,
    pub blob: Mask,
    /// Everything outside the two lung bounding boxes; background-sized by
    /// construction (above 90% of the image).
    pub background: Mask,
}

impl Phantom {
    /// All part masks in segment-everything order:
    /// right lung, left lung, blob, background.
    pub fn parts(&self) -> Vec<Mask> {
        vec![
            self.right_lung.clone(),
            self.left_lung.clone(),
            self.blob.clone(),
            self.background.clone(),
        ]
    }
}

/// Build the standard 64x64 two-lung phantom. The ellipses carry different
/// intensities so their crops embed differently.
pub fn two_lung_phantom() -> Phantom {
    let (h, w) = (64usize, 64usize);
    let right_lung = ellipse_mask(h, w, 20.0, 32.0, 7.0, 5.0);
    let left_lung = ellipse_mask(h, w, 44.0, 32.0, 7.0, 5.0);
    let blob = disc_mask(h, w, 32.0, 12.0, 6.0);
    // bounding boxes of the ellipses: x in [13,27] and [37,51], y in [27,37]
    let in_lung_boxes = |x: usize, y: usize| {
        ((13..=27).contains(&x) || (37..=51).contains(&x)) && (27..=37).contains(&y)
    };
    let background = Mask::from_fn(h, w, |x, y| !in_lung_boxes(x, y));
    let slice = SliceImage::from_fn(h, w, |x, y| {
        if right_lung.get(x, y) {
            0.8
        } else if left_lung.get(x, y) {
            0.55
        } else if blob.get(x, y) {
            0.9
        } else {
            0.05
        }
    })
    .expect("phantom intensities are in range");
    Phantom {
        slice,
        right_lung,
        left_lung,
        blob,
        background,
    }
}

/// The documented fake-embedder image feature of a crop, computed directly:
/// (mean intensity, normalized centroid-x, normalized centroid-y, foreground
/// fraction). Kept here so tests can derive prompt vectors without touching
/// the fake backend implementation.
pub fn crop_feature4(crop: &SliceImage) -> [f64; 4] {
    let (h, w) = crop.dims();
    let total = (h * w) as f64;
    let mut sum = 0.0;
    let mut fg = 0usize;
    let (mut cx, mut cy) = (0.0f64, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            let p = crop.get(x, y) as f64;
            sum += p;
            if p > 0.0 {
                fg += 1;
                cx += x as f64;
                cy += y as f64;
            }
        }
    }
    let norm = |c: f64, extent: usize| {
        if extent <= 1 {
            0.5
        } else {
            c / (extent - 1) as f64
        }
    };
    if fg == 0 {
        [sum / total, 0.5, 0.5, 0.0]
    } else {
        [
            sum / total,
            norm(cx / fg as f64, w),
            norm(cy / fg as f64, h),
            fg as f64 / total,
        ]
    }
}

/// Options for the planted-pattern labeled volumes.
#[derive(Debug, Clone, Copy)]
pub struct PlantedPatternOptions {
    pub hw: (usize, usize),
    pub min_len: usize,
    pub max_len: usize,
    /// Uniform background noise ceiling.
    pub noise: f32,
    /// Intensity added inside the planted disc for positive-class scans.
    pub pattern_intensity: f32,
}

impl Default for PlantedPatternOptions {
    fn default() -> Self {
        PlantedPatternOptions {
            hw: (64, 64),
            min_len: 12,
            max_len: 16,
            noise: 0.15,
            pattern_intensity: 0.7,
        }
    }
}

/// One labeled synthetic volume. Scans labeled covid carry a bright disc on
/// every slice; non-covid scans are noise only. Slice counts vary within
/// the configured range, independent of the label.
pub fn planted_volume(
    scan_id: &str,
    label: ClassLabel,
    opts: &PlantedPatternOptions,
    rng: &mut ChaCha8Rng,
) -> ScanVolume {
    let (h, w) = opts.hw;
    let l = rng.gen_range(opts.min_len..=opts.max_len);
    let r = h as f64 / 6.0;
    let cx = w as f64 / 2.0 + rng.gen_range(-4.0..4.0);
    let cy = h as f64 / 2.0 + rng.gen_range(-4.0..4.0);
    let mut slices = Vec::with_capacity(l);
    for _ in 0..l {
        let mut pixels = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let mut v = rng.gen_range(0.0..opts.noise);
                if label == ClassLabel::Covid {
                    let dx = x as f64 - cx;
                    let dy = y as f64 - cy;
                    if dx * dx + dy * dy <= r * r {
                        v += opts.pattern_intensity;
                    }
                }
                pixels.push(v.min(1.0));
            }
        }
        slices.push(SliceImage::from_pixels(h, w, pixels).expect("values clamped"));
    }
    ScanVolume::new(scan_id, slices, Some(label)).expect("l >= 1")
}

/// Balanced labeled set: even indices covid, odd indices non-covid.
pub fn planted_set(
    prefix: &str,
    count: usize,
    opts: &PlantedPatternOptions,
    rng: &mut ChaCha8Rng,
) -> Vec<ScanVolume> {
    (0..count)
        .map(|i| {
            let label = if i % 2 == 0 {
                ClassLabel::Covid
            } else {
                ClassLabel::NonCovid
            };
            planted_volume(&format!("{prefix}{i:02}"), label, opts, rng)
        })
        .collect()
}

/// Write a volume as 8-bit grayscale PNG slices named `0000.png`,
/// `0001.png`, ... under `dir` (created if needed).
pub fn write_volume_pngs(volume: &ScanVolume, dir: &Path) -> Result<(), VolumeError> {
    std::fs::create_dir_all(dir).map_err(|e| VolumeError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    for (i, slice) in volume.slices().iter().enumerate() {
        let (h, w) = slice.dims();
        let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Luma([(slice.get(x as usize, y as usize) * 255.0).round() as u8])
        });
        let path = dir.join(format!("{i:04}.png"));
        buf.save(&path).map_err(|e| VolumeError::BadSlice {
            path,
            reason: e.to_string(),
        })?;
    }
    Ok(())
}
