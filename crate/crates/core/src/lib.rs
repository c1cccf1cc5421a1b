//! CT scan lung segmentation and classification toolkit.
//!
//! The library has two halves:
//!
//! * A three-stage segmentation pipeline for CT slices: a promptable
//!   segmenter first emits part-based candidate masks over a keypoint grid,
//!   a text/image embedder then retrieves the region-of-interest crops by
//!   cosine similarity against descriptive prompts, and the segmenter is
//!   finally re-prompted with the ROI bounding boxes to produce the lung
//!   mask. Backends are pluggable; deterministic fakes ship for offline use.
//! * A variable-length 3-D scan classifier: per-slice features are routed
//!   to positions within a fixed padded length, a recurrent layer runs over
//!   the padded sequence, a mask layer zeroes outputs at unselected
//!   positions, and a dense head with selective weight updates produces
//!   class probabilities.

pub mod backend;
pub mod classifier;
pub mod mask;
pub mod metrics;
pub(crate) mod parallel;
pub mod pipeline;
pub mod synthetic;
pub mod volume;

pub use backend::{Embedder, EmbeddingVec, KeypointGrid, Segmenter, TextPromptSet};
pub use mask::{BoundingBox, Mask};
pub use pipeline::{PipelineConfig, RoiMode, RoiTarget};
pub use volume::{ClassLabel, ScanVolume, SliceImage, VolumeManifest};
