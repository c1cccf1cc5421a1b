//! Deterministic fake backends.
//!
//! The fakes are pure functions of their configuration and inputs, so tests
//! can predict every output exactly. The segmenter maps image fingerprints to
//! fixed mask lists; the embedder computes a documented 4-dimensional feature
//! of the crop and looks text prompts up in a configured table.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{image_fingerprint, BackendError, Embedder, EmbeddingVec, Segmenter};
use crate::mask::{BoundingBox, Mask};
use crate::volume::{load_mask, SliceImage};

/// Segmenter backed by a fingerprint-to-masks table.
///
/// `segment_everything` returns the configured list in order;
/// `segment_with_box` returns the union of all configured mask pixels lying
/// inside the box.
#[derive(Debug, Default, Clone)]
pub struct FakeSegmenter {
    masks_by_fingerprint: BTreeMap<String, Vec<Mask>>,
}

impl FakeSegmenter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register the mask list for an image. Masks must share the image's
    /// dimensions.
    pub fn insert(&mut self, image: &SliceImage, masks: Vec<Mask>) {
        for m in &masks {
            assert_eq!(
                m.dims(),
                image.dims(),
                "configured mask dims must match image dims"
            );
        }
        self.masks_by_fingerprint
            .insert(image_fingerprint(image), masks);
    }

    pub fn with_image(mut self, image: &SliceImage, masks: Vec<Mask>) -> Self {
        self.insert(image, masks);
        self
    }

    /// Register by precomputed fingerprint (used by the config-file loader).
    pub fn insert_fingerprint(&mut self, fingerprint: impl Into<String>, masks: Vec<Mask>) {
        self.masks_by_fingerprint.insert(fingerprint.into(), masks);
    }

    fn configured(&self, image: &SliceImage) -> Result<&Vec<Mask>, BackendError> {
        let fp = image_fingerprint(image);
        self.masks_by_fingerprint
            .get(&fp)
            .ok_or(BackendError::UnconfiguredImage(fp))
    }
}

impl Segmenter for FakeSegmenter {
    fn segment_everything(
        &self,
        image: &SliceImage,
        _grid: &super::KeypointGrid,
    ) -> Result<Vec<Mask>, BackendError> {
        Ok(self.configured(image)?.clone())
    }

    fn segment_with_box(
        &self,
        image: &SliceImage,
        bbox: &BoundingBox,
    ) -> Result<Mask, BackendError> {
        let masks = self.configured(image)?;
        let (h, w) = image.dims();
        let mut out = Mask::empty(h, w);
        for m in masks {
            for (x, y) in m.foreground() {
                if bbox.contains(x, y) {
                    out.set(x, y, true);
                }
            }
        }
        Ok(out)
    }
}

/// Normalized centroid convention: empty foreground sits at the image center.
fn feature4(image: &SliceImage) -> [f64; 4] {
    let (h, w) = image.dims();
    let total = (h * w) as f64;
    let mut sum = 0.0;
    let mut fg_count = 0usize;
    let (mut cx, mut cy) = (0.0f64, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            let p = image.get(x, y) as f64;
            sum += p;
            if p > 0.0 {
                fg_count += 1;
                cx += x as f64;
                cy += y as f64;
            }
        }
    }
    let mean = sum / total;
    let frac = fg_count as f64 / total;
    let norm = |c: f64, extent: usize| {
        if extent <= 1 {
            0.5
        } else {
            c / (extent - 1) as f64
        }
    };
    let (ncx, ncy) = if fg_count == 0 {
        (0.5, 0.5)
    } else {
        (
            norm(cx / fg_count as f64, w),
            norm(cy / fg_count as f64, h),
        )
    };
    [mean, ncx, ncy, frac]
}

/// Embedder whose image features are the 4-vector (mean intensity,
/// normalized centroid-x, normalized centroid-y, foreground fraction) of the
/// crop, and whose text features come from a configured table with a stable
/// hash-derived fallback for unlisted prompts.
#[derive(Debug, Default, Clone)]
pub struct FakeEmbedder {
    text_vectors: BTreeMap<String, [f64; 4]>,
}

impl FakeEmbedder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_text(&mut self, prompt: impl Into<String>, vector: [f64; 4]) {
        self.text_vectors.insert(prompt.into(), vector);
    }

    pub fn with_text(mut self, prompt: impl Into<String>, vector: [f64; 4]) -> Self {
        self.insert_text(prompt, vector);
        self
    }

    fn fallback_text_vector(prompt: &str) -> [f64; 4] {
        let digest = Sha256::digest(prompt.as_bytes());
        let mut v = [0.0f64; 4];
        for (i, slot) in v.iter_mut().enumerate() {
            let mut b = [0u8; 8];
            b.copy_from_slice(&digest[i * 8..(i + 1) * 8]);
            *slot = (u64::from_le_bytes(b) as f64 / u64::MAX as f64).max(1e-3);
        }
        v
    }
}

impl Embedder for FakeEmbedder {
    fn embed_image(&self, image: &SliceImage) -> Result<EmbeddingVec, BackendError> {
        EmbeddingVec::new(feature4(image).to_vec())
    }

    fn embed_text(&self, prompt: &str) -> Result<EmbeddingVec, BackendError> {
        let v = self
            .text_vectors
            .get(prompt)
            .copied()
            .unwrap_or_else(|| Self::fallback_text_vector(prompt));
        EmbeddingVec::new(v.to_vec())
    }
}

/// Load a fake backend pair from a line-oriented config file.
///
/// Records are tab-separated; `#` lines and blank lines are ignored:
///
/// ```text
/// mask\t<fingerprint>\t<mask.png path>     # appended to that image's list
/// text\t<prompt>\t<v0> <v1> <v2> <v3>      # text embedding for a prompt
/// ```
///
/// Relative mask paths resolve against the config file's directory.
pub fn load_fake_config(path: &Path) -> Result<(FakeSegmenter, FakeEmbedder), BackendError> {
    let bad = |reason: String| BackendError::BadFakeConfig {
        path: path.to_path_buf(),
        reason,
    };
    let file = fs::File::open(path).map_err(|e| bad(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seg_lists: BTreeMap<String, Vec<Mask>> = BTreeMap::new();
    let mut embedder = FakeEmbedder::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| bad(e.to_string()))?;
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.first().copied() {
            Some("mask") if fields.len() == 3 => {
                let mask_path = base.join(fields[2]);
                let mask = load_mask(&mask_path)?;
                seg_lists.entry(fields[1].to_string()).or_default().push(mask);
            }
            Some("text") if fields.len() == 3 => {
                let parts: Vec<&str> = fields[2].split_whitespace().collect();
                if parts.len() != 4 {
                    return Err(bad(format!(
                        "line {}: text vector needs 4 components",
                        lineno + 1
                    )));
                }
                let mut v = [0.0f64; 4];
                for (slot, p) in v.iter_mut().zip(&parts) {
                    *slot = p
                        .parse()
                        .map_err(|_| bad(format!("line {}: bad number {p:?}", lineno + 1)))?;
                }
                embedder.insert_text(fields[1], v);
            }
            _ => {
                return Err(bad(format!(
                    "line {}: expected `mask` or `text` record",
                    lineno + 1
                )))
            }
        }
    }
    let mut segmenter = FakeSegmenter::new();
    for (fp, masks) in seg_lists {
        segmenter.insert_fingerprint(fp, masks);
    }
    Ok((segmenter, embedder))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::make_grid;
    use crate::volume::save_mask;
    use tempfile::tempdir;

    fn probe_image() -> SliceImage {
        SliceImage::from_fn(6, 6, |x, y| ((x + 2 * y) % 5) as f32 / 5.0).unwrap()
    }

    #[test]
    fn segment_everything_returns_configured_order() {
        let img = probe_image();
        let a = Mask::from_fn(6, 6, |x, _| x < 2);
        let b = Mask::from_fn(6, 6, |x, _| x >= 4);
        let seg = FakeSegmenter::new().with_image(&img, vec![a.clone(), b.clone()]);
        let grid = make_grid(6, 6, 2).unwrap();
        let out = seg.segment_everything(&img, &grid).unwrap();
        assert_eq!(out, vec![a, b]);
    }

    #[test]
    fn full_image_box_unions_all_parts() {
        let img = probe_image();
        let a = Mask::from_fn(6, 6, |x, _| x < 2);
        let b = Mask::from_fn(6, 6, |x, _| x >= 4);
        let seg = FakeSegmenter::new().with_image(&img, vec![a.clone(), b.clone()]);
        let out = seg
            .segment_with_box(&img, &BoundingBox::new(0, 0, 5, 5))
            .unwrap();
        assert_eq!(out, a.union(&b));
    }

    #[test]
    fn box_over_one_disjoint_part_returns_it_exactly() {
        let img = probe_image();
        let a = Mask::from_fn(6, 6, |x, _| x < 2);
        let b = Mask::from_fn(6, 6, |x, _| x >= 4);
        let seg = FakeSegmenter::new().with_image(&img, vec![a.clone(), b]);
        let out = seg
            .segment_with_box(&img, &BoundingBox::new(0, 0, 1, 5))
            .unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn unknown_fingerprint_is_unconfigured() {
        let seg = FakeSegmenter::new();
        let img = probe_image();
        let grid = make_grid(6, 6, 2).unwrap();
        assert!(matches!(
            seg.segment_everything(&img, &grid),
            Err(BackendError::UnconfiguredImage(_))
        ));
    }

    #[test]
    fn image_features_of_zero_crop() {
        let img = SliceImage::constant(4, 4, 0.0).unwrap();
        let e = FakeEmbedder::new();
        let v = e.embed_image(&img).unwrap();
        assert_eq!(v.values(), &[0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn image_features_of_all_one_crop() {
        let img = SliceImage::constant(10, 10, 1.0).unwrap();
        let v = FakeEmbedder::new().embed_image(&img).unwrap();
        assert_eq!(v.values(), &[1.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn image_features_of_single_corner_pixel() {
        let img = SliceImage::from_fn(2, 2, |x, y| if x == 0 && y == 0 { 1.0 } else { 0.0 })
            .unwrap();
        let v = FakeEmbedder::new().embed_image(&img).unwrap();
        assert_eq!(v.values(), &[0.25, 0.0, 0.0, 0.25]);
    }

    #[test]
    fn embedder_is_referentially_transparent() {
        let img = probe_image();
        let e = FakeEmbedder::new().with_text("lung", [0.1, 0.2, 0.3, 0.4]);
        assert_eq!(
            e.embed_image(&img).unwrap(),
            e.embed_image(&img).unwrap()
        );
        assert_eq!(
            e.embed_text("lung").unwrap().values(),
            &[0.1, 0.2, 0.3, 0.4]
        );
        assert_eq!(
            e.embed_text("unlisted").unwrap(),
            e.embed_text("unlisted").unwrap()
        );
    }

    #[test]
    fn config_file_roundtrip() {
        let dir = tempdir().unwrap();
        let m1 = Mask::from_fn(4, 4, |x, _| x == 0);
        let m2 = Mask::from_fn(4, 4, |_, y| y == 3);
        save_mask(&m1, &dir.path().join("m1.mask.png")).unwrap();
        save_mask(&m2, &dir.path().join("m2.mask.png")).unwrap();
        let cfg = dir.path().join("fake.tsv");
        fs::write(
            &cfg,
            "# comment\nmask\tdeadbeef00000000\tm1.mask.png\nmask\tdeadbeef00000000\tm2.mask.png\ntext\tright lung\t0.5 0.2 0.5 0.3\n",
        )
        .unwrap();
        let (seg, emb) = load_fake_config(&cfg).unwrap();
        let img = SliceImage::constant(4, 4, 0.25).unwrap();
        // fingerprint of this image is not deadbeef..., so lookups miss
        assert!(seg
            .segment_with_box(&img, &BoundingBox::new(0, 0, 3, 3))
            .is_err());
        assert_eq!(
            emb.embed_text("right lung").unwrap().values(),
            &[0.5, 0.2, 0.5, 0.3]
        );
    }

    #[test]
    fn config_file_rejects_malformed_lines() {
        let dir = tempdir().unwrap();
        let cfg = dir.path().join("fake.tsv");
        fs::write(&cfg, "mask\tonly-two-fields\n").unwrap();
        assert!(matches!(
            load_fake_config(&cfg),
            Err(BackendError::BadFakeConfig { .. })
        ));
    }
}
