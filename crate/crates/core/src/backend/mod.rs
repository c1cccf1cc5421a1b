//! Segmenter and embedder interfaces the pipeline orchestrates.
//!
//! Two backend capabilities are required: a promptable segmenter with a
//! segment-everything mode (keypoint grid prompt) and a box-prompted mode,
//! and an image/text embedder mapping both modalities into one space.
//! Deterministic fakes live in [`fake`]; adapters for real model checkpoints
//! plug in behind the same traits.

pub mod fake;

use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mask::{BoundingBox, Mask};
use crate::volume::SliceImage;

pub use fake::{FakeEmbedder, FakeSegmenter};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no masks configured for image fingerprint {0}")]
    UnconfiguredImage(String),
    #[error("embedding is a zero vector")]
    DegenerateEmbedding,
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid prompt set: {0}")]
    InvalidPrompts(String),
    #[error("bad backend selector {0:?} (expected `fake` or `checkpoint:<path>`)")]
    BadSelector(String),
    #[error("checkpoint adapter unavailable: {0}")]
    AdapterUnavailable(String),
    #[error("bad fake backend config {path}: {reason}")]
    BadFakeConfig { path: PathBuf, reason: String },
    #[error(transparent)]
    Volume(#[from] crate::volume::VolumeError),
}

/// Vector in the shared image/text embedding space. Stored un-normalized;
/// normalization happens where similarity is computed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVec {
    values: Vec<f64>,
}

impl EmbeddingVec {
    pub fn new(values: Vec<f64>) -> Result<Self, BackendError> {
        if values.is_empty() {
            return Err(BackendError::InvalidEmbedding("zero dimension".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::InvalidEmbedding("non-finite value".into()));
        }
        Ok(EmbeddingVec { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-norm copy; zero vectors are degenerate.
    pub fn normalized(&self) -> Result<EmbeddingVec, BackendError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(BackendError::DegenerateEmbedding);
        }
        EmbeddingVec::new(self.values.iter().map(|v| v / n).collect())
    }
}

/// Non-empty set of descriptive sentences for one anatomical target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextPromptSet {
    prompts: Vec<String>,
}

impl TextPromptSet {
    pub fn new(prompts: Vec<String>) -> Result<Self, BackendError> {
        if prompts.is_empty() {
            return Err(BackendError::InvalidPrompts("empty prompt set".into()));
        }
        if prompts.iter().any(|p| p.trim().is_empty()) {
            return Err(BackendError::InvalidPrompts("blank prompt".into()));
        }
        Ok(TextPromptSet { prompts })
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }
}

/// Uniform n-by-n lattice of keypoints used as the segment-everything prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeypointGrid {
    points: Vec<(usize, usize)>,
    n: usize,
}

impl KeypointGrid {
    /// (x, y) points, row by row.
    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Lattice points at `(round(j*(W-1)/(n-1)), round(i*(H-1)/(n-1)))`,
/// round-half-up; `n = 1` yields the single center point.
pub fn make_grid(height: usize, width: usize, n: usize) -> Result<KeypointGrid, BackendError> {
    if n < 1 || height < 1 || width < 1 {
        return Err(BackendError::InvalidGrid(format!(
            "H={height} W={width} n={n} must all be >= 1"
        )));
    }
    let coord = |i: usize, extent: usize| -> usize {
        if n == 1 {
            ((extent - 1) as f64 / 2.0).round() as usize
        } else {
            (i as f64 * (extent - 1) as f64 / (n - 1) as f64).round() as usize
        }
    };
    let mut points = Vec::with_capacity(n * n);
    for i in 0..n {
        let y = coord(i, height);
        for j in 0..n {
            points.push((coord(j, width), y));
        }
    }
    Ok(KeypointGrid { points, n })
}

/// Promptable segmenter: exhaustive part masks from a keypoint grid, or one
/// mask from a bounding-box prompt. Returned masks must match the image
/// dimensions and be deterministic for fixed inputs and backend state.
pub trait Segmenter: Send + Sync {
    fn segment_everything(
        &self,
        image: &SliceImage,
        grid: &KeypointGrid,
    ) -> Result<Vec<Mask>, BackendError>;

    fn segment_with_box(
        &self,
        image: &SliceImage,
        bbox: &BoundingBox,
    ) -> Result<Mask, BackendError>;

    /// Whether concurrent read-only calls are safe. Backends that return
    /// false are serialized by the pipeline.
    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Image/text embedder into a shared space of fixed dimension.
pub trait Embedder: Send + Sync {
    fn embed_image(&self, image: &SliceImage) -> Result<EmbeddingVec, BackendError>;

    fn embed_text(&self, prompt: &str) -> Result<EmbeddingVec, BackendError>;

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Mean of the unit-normalized per-prompt embeddings, renormalized to unit
/// norm. Collapses a multi-sentence prompt set into one text embedding.
pub fn ensemble_text_embedding(
    prompts: &TextPromptSet,
    embedder: &dyn Embedder,
) -> Result<EmbeddingVec, BackendError> {
    let mut acc: Option<Vec<f64>> = None;
    for prompt in prompts.prompts() {
        let e = embedder.embed_text(prompt)?.normalized()?;
        match &mut acc {
            None => acc = Some(e.values().to_vec()),
            Some(acc) => {
                if acc.len() != e.dim() {
                    return Err(BackendError::InvalidEmbedding(format!(
                        "dimension mismatch {} vs {}",
                        acc.len(),
                        e.dim()
                    )));
                }
                for (a, v) in acc.iter_mut().zip(e.values()) {
                    *a += v;
                }
            }
        }
    }
    let mut mean = acc.expect("prompt set is non-empty");
    let k = prompts.prompts().len() as f64;
    for v in &mut mean {
        *v /= k;
    }
    EmbeddingVec::new(mean)?.normalized()
}

/// Stable content fingerprint of a slice: SHA-256 over dimensions and pixels
/// quantized to 16 bits, truncated to 16 hex characters. Used to key fake
/// backend configurations.
pub fn image_fingerprint(image: &SliceImage) -> String {
    let mut hasher = Sha256::new();
    hasher.update((image.width() as u32).to_le_bytes());
    hasher.update((image.height() as u32).to_le_bytes());
    for &p in image.pixels() {
        let q = (p as f64 * 65535.0).round() as u16;
        hasher.update(q.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Parsed `backend` config key: `fake` or `checkpoint:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSelection {
    Fake,
    Checkpoint(PathBuf),
}

impl BackendSelection {
    pub fn parse(s: &str) -> Result<Self, BackendError> {
        if s == "fake" {
            return Ok(BackendSelection::Fake);
        }
        if let Some(path) = s.strip_prefix("checkpoint:") {
            if path.is_empty() {
                return Err(BackendError::BadSelector(s.to_string()));
            }
            return Ok(BackendSelection::Checkpoint(PathBuf::from(path)));
        }
        Err(BackendError::BadSelector(s.to_string()))
    }
}
