//! Per-slice segmentation orchestration, lifted to whole volumes.
//!
//! A slice runs through three stages: segment-everything over a keypoint
//! grid, area filtering plus masked cropping and text-guided ROI retrieval,
//! then a box prompt per selected ROI whose results are unioned into the
//! final mask.

use std::fmt::Write as _;

use thiserror::Error;

use crate::backend::{
    ensemble_text_embedding, make_grid, BackendError, Embedder, EmbeddingVec, Segmenter,
    TextPromptSet,
};
use crate::mask::{BoundingBox, Mask};
use crate::parallel::try_map_indexed;
use crate::volume::{ScanVolume, SliceImage, VolumeError};

/// Masks at or above this fraction of the image area are treated as
/// background-sized and dropped regardless of the lower threshold;
/// segment-everything mode commonly emits a near-full-frame background mask.
pub const BACKGROUND_AREA_FRACTION: f64 = 0.9;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no candidate masks survive filtering")]
    NoCandidates,
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("embedding is a zero vector")]
    DegenerateEmbedding,
    #[error("backend returned mask of {got:?} for image of {want:?}")]
    BackendContract {
        want: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid pipeline config: {0}")]
    BadConfig(String),
    #[error("slice {index}: {source}")]
    Slice {
        index: usize,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// How the retrieval stage picks regions of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoiMode {
    /// One argmax over one combined prompt set.
    Single,
    /// One pass per configured target (right lung, left lung); winners of
    /// earlier targets are excluded from later candidate sets.
    PerLung,
}

impl RoiMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single" => Some(RoiMode::Single),
            "per_lung" => Some(RoiMode::PerLung),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RoiMode::Single => "single",
            RoiMode::PerLung => "per_lung",
        }
    }
}

/// Named retrieval target with its descriptive prompt set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiTarget {
    pub name: String,
    pub prompts: TextPromptSet,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Area threshold as a fraction of the image area; masks must exceed it.
    pub tau_fraction: f64,
    /// Keypoints per side of the segment-everything grid.
    pub grid_n: usize,
    pub roi_mode: RoiMode,
    pub targets: Vec<RoiTarget>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(0.0..1.0).contains(&self.tau_fraction) {
            return Err(PipelineError::BadConfig(format!(
                "tau_fraction {} outside [0, 1)",
                self.tau_fraction
            )));
        }
        if self.grid_n < 1 {
            return Err(PipelineError::BadConfig("grid_n must be >= 1".into()));
        }
        if self.targets.is_empty() {
            return Err(PipelineError::BadConfig("no retrieval targets".into()));
        }
        Ok(())
    }
}

fn default_prompts(side: &str) -> TextPromptSet {
    TextPromptSet::new(vec![
        format!("the {side} lung in an axial chest CT slice"),
        format!("a large dark air-filled region, the {side} lung parenchyma"),
        format!("{side} lung lobe tissue surrounded by the chest wall"),
    ])
    .expect("static prompts are non-empty")
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tau_fraction: 0.02,
            grid_n: 32,
            roi_mode: RoiMode::PerLung,
            targets: vec![
                RoiTarget {
                    name: "right_lung".into(),
                    prompts: default_prompts("right"),
                },
                RoiTarget {
                    name: "left_lung".into(),
                    prompts: default_prompts("left"),
                },
            ],
        }
    }
}

/// Keep masks with `area > tau_fraction * image_area`, in order, dropping
/// background-sized masks (area at or above [`BACKGROUND_AREA_FRACTION`] of
/// the image).
pub fn filter_masks(masks: &[Mask], tau_fraction: f64, image_area: usize) -> Vec<Mask> {
    filter_mask_indices(masks, tau_fraction, image_area)
        .into_iter()
        .map(|i| masks[i].clone())
        .collect()
}

/// Indices (into `masks`) of the masks [`filter_masks`] keeps.
pub fn filter_mask_indices(masks: &[Mask], tau_fraction: f64, image_area: usize) -> Vec<usize> {
    let lower = tau_fraction * image_area as f64;
    let upper = BACKGROUND_AREA_FRACTION * image_area as f64;
    masks
        .iter()
        .enumerate()
        .filter(|(_, m)| {
            let a = m.area() as f64;
            a > lower && a < upper
        })
        .map(|(i, _)| i)
        .collect()
}

/// Tight bounding box over the mask's foreground.
pub fn compute_bbox(mask: &Mask) -> Result<BoundingBox, PipelineError> {
    if mask.is_empty() {
        return Err(PipelineError::EmptyMask);
    }
    let (mut x_min, mut y_min) = (usize::MAX, usize::MAX);
    let (mut x_max, mut y_max) = (0usize, 0usize);
    for (x, y) in mask.foreground() {
        x_min = x_min.min(x);
        y_min = y_min.min(y);
        x_max = x_max.max(x);
        y_max = y_max.max(y);
    }
    Ok(BoundingBox::new(x_min, y_min, x_max, y_max))
}

/// Element-wise product of image and mask, tight-cropped to the mask's
/// bounding box.
pub fn crop_with_mask(image: &SliceImage, mask: &Mask) -> Result<SliceImage, PipelineError> {
    if image.dims() != mask.dims() {
        return Err(PipelineError::DimensionMismatch(format!(
            "image {:?} vs mask {:?}",
            image.dims(),
            mask.dims()
        )));
    }
    let bbox = compute_bbox(mask)?;
    let crop = SliceImage::from_fn(bbox.height(), bbox.width(), |x, y| {
        let (sx, sy) = (bbox.x_min + x, bbox.y_min + y);
        if mask.get(sx, sy) {
            image.get(sx, sy)
        } else {
            0.0
        }
    })
    .map_err(PipelineError::Volume)?;
    Ok(crop)
}

/// Standard cosine similarity, clamped into `[-1, 1]`.
pub fn cosine_similarity(v: &EmbeddingVec, w: &EmbeddingVec) -> Result<f64, PipelineError> {
    if v.dim() != w.dim() {
        return Err(PipelineError::DimensionMismatch(format!(
            "embedding dims {} vs {}",
            v.dim(),
            w.dim()
        )));
    }
    let (nv, nw) = (v.norm(), w.norm());
    if nv == 0.0 || nw == 0.0 {
        return Err(PipelineError::DegenerateEmbedding);
    }
    let dot: f64 = v.values().iter().zip(w.values()).map(|(a, b)| a * b).sum();
    Ok((dot / (nv * nw)).clamp(-1.0, 1.0))
}

/// Candidate crop with the index of the mask it came from in the original
/// segment-everything output.
#[derive(Debug, Clone)]
pub struct CropEntry {
    pub source_mask_index: usize,
    pub crop: SliceImage,
}

/// Crops of the masks that passed the area filter, in filtered order.
#[derive(Debug, Clone, Default)]
pub struct CropSet {
    pub entries: Vec<CropEntry>,
}

impl CropSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Argmax of cosine similarity between each crop's image embedding and the
/// text embedding `w`; ties break to the lowest index. Returns the index into
/// `crops` and the winning score.
pub fn select_roi(
    crops: &CropSet,
    embedder: &dyn Embedder,
    w: &EmbeddingVec,
) -> Result<(usize, f64), PipelineError> {
    if crops.is_empty() {
        return Err(PipelineError::NoCandidates);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, entry) in crops.entries.iter().enumerate() {
        let v = embedder.embed_image(&entry.crop)?;
        let score = cosine_similarity(&v, w)?;
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((i, score)),
        }
    }
    Ok(best.expect("non-empty crop set"))
}

/// Winning candidate for one retrieval target.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiScore {
    pub target: String,
    /// Index of the winning mask in the segment-everything output.
    pub source_mask_index: usize,
    pub score: f64,
}

/// Final mask of one slice plus the retrieval scores behind it.
#[derive(Debug, Clone)]
pub struct SliceOutcome {
    pub mask: Mask,
    pub roi: Vec<RoiScore>,
}

/// Run the full per-slice chain: segment-everything, area filter, masked
/// crops, per-target ROI retrieval, box-prompted final masks, union.
///
/// In [`RoiMode::PerLung`] each configured target retrieves with its own
/// prompt set and earlier winners leave the later candidate sets. A later
/// target with an exhausted candidate set contributes nothing. In
/// [`RoiMode::Single`] all targets' prompts combine into one set and a
/// single ROI is selected.
pub fn segment_slice(
    image: &SliceImage,
    segmenter: &dyn Segmenter,
    embedder: &dyn Embedder,
    cfg: &PipelineConfig,
) -> Result<SliceOutcome, PipelineError> {
    cfg.validate()?;
    let (h, w) = image.dims();
    let grid = make_grid(h, w, cfg.grid_n)?;
    let parts = segmenter.segment_everything(image, &grid)?;
    for m in &parts {
        if m.dims() != image.dims() {
            return Err(PipelineError::BackendContract {
                want: image.dims(),
                got: m.dims(),
            });
        }
    }
    let kept = filter_mask_indices(&parts, cfg.tau_fraction, h * w);
    if kept.is_empty() {
        return Err(PipelineError::NoCandidates);
    }
    let mut crops = CropSet::default();
    for &i in &kept {
        crops.entries.push(CropEntry {
            source_mask_index: i,
            crop: crop_with_mask(image, &parts[i])?,
        });
    }

    let passes: Vec<(String, TextPromptSet)> = match cfg.roi_mode {
        RoiMode::Single => {
            let all: Vec<String> = cfg
                .targets
                .iter()
                .flat_map(|t| t.prompts.prompts().iter().cloned())
                .collect();
            vec![(
                "roi".to_string(),
                TextPromptSet::new(all).map_err(PipelineError::Backend)?,
            )]
        }
        RoiMode::PerLung => cfg
            .targets
            .iter()
            .map(|t| (t.name.clone(), t.prompts.clone()))
            .collect(),
    };

    let mut taken: Vec<usize> = Vec::new();
    let mut roi = Vec::new();
    let mut final_mask = Mask::empty(h, w);
    for (name, prompts) in passes {
        let remaining = CropSet {
            entries: crops
                .entries
                .iter()
                .filter(|e| !taken.contains(&e.source_mask_index))
                .cloned()
                .collect(),
        };
        if remaining.is_empty() {
            continue;
        }
        let w_text = ensemble_text_embedding(&prompts, embedder)?;
        let (idx, score) = select_roi(&remaining, embedder, &w_text)?;
        let source = remaining.entries[idx].source_mask_index;
        taken.push(source);
        roi.push(RoiScore {
            target: name,
            source_mask_index: source,
            score,
        });
        let bbox = compute_bbox(&parts[source])?;
        let refined = segmenter.segment_with_box(image, &bbox)?;
        if refined.dims() != image.dims() {
            return Err(PipelineError::BackendContract {
                want: image.dims(),
                got: refined.dims(),
            });
        }
        final_mask = final_mask.union(&refined);
    }
    Ok(SliceOutcome {
        mask: final_mask,
        roi,
    })
}

/// Per-slice status recorded in the volume report.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStatus {
    pub index: usize,
    pub ok: bool,
    pub roi: Vec<RoiScore>,
}

/// Status report for one processed volume.
#[derive(Debug, Clone)]
pub struct VolumeReport {
    pub scan_id: String,
    pub slices: Vec<SliceStatus>,
}

impl VolumeReport {
    pub fn flagged(&self) -> usize {
        self.slices.iter().filter(|s| !s.ok).count()
    }

    /// Tab-separated text: slice index, status, `target:mask_index:score`
    /// triples separated by commas.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("slice\tstatus\troi_scores\n");
        for s in &self.slices {
            let status = if s.ok { "ok" } else { "no_candidates" };
            let scores = s
                .roi
                .iter()
                .map(|r| format!("{}:{}:{:.6}", r.target, r.source_mask_index, r.score))
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(out, "{}\t{}\t{}", s.index, status, scores);
        }
        out
    }
}

/// Apply [`segment_slice`] to every slice of a volume, fanning out across
/// `workers`. Slices with no surviving candidates yield an all-zero mask and
/// a flagged status; other errors abort with the slice index attached.
/// Results are assembled in slice order regardless of completion order.
pub fn segment_volume(
    volume: &ScanVolume,
    segmenter: &dyn Segmenter,
    embedder: &dyn Embedder,
    cfg: &PipelineConfig,
    workers: usize,
) -> Result<(Vec<Mask>, VolumeReport), PipelineError> {
    cfg.validate()?;
    // Backends that declare single-threaded access get a serialized run.
    let workers = if segmenter.concurrent_safe() && embedder.concurrent_safe() {
        workers.max(1)
    } else {
        1
    };
    let run_slice = |index: usize, slice: &SliceImage| -> Result<(Mask, SliceStatus), PipelineError> {
        match segment_slice(slice, segmenter, embedder, cfg) {
            Ok(outcome) => Ok((
                outcome.mask,
                SliceStatus {
                    index,
                    ok: true,
                    roi: outcome.roi,
                },
            )),
            Err(PipelineError::NoCandidates) => {
                let (h, w) = slice.dims();
                Ok((
                    Mask::empty(h, w),
                    SliceStatus {
                        index,
                        ok: false,
                        roi: Vec::new(),
                    },
                ))
            }
            Err(e) => Err(PipelineError::Slice {
                index,
                source: Box::new(e),
            }),
        }
    };
    let results = try_map_indexed(volume.slices(), workers, run_slice)?;
    let mut masks = Vec::with_capacity(results.len());
    let mut statuses = Vec::with_capacity(results.len());
    for (mask, status) in results {
        masks.push(mask);
        statuses.push(status);
    }
    Ok((
        masks,
        VolumeReport {
            scan_id: volume.scan_id.clone(),
            slices: statuses,
        },
    ))
}
