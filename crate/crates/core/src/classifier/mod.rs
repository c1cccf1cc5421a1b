//! Variable-length 3-D scan classifier.
//!
//! Per-slice features from a pluggable extractor are routed to positions
//! within a fixed padded length `t`, a single one-directional recurrent layer
//! runs over the padded sequence, a mask layer zeroes outputs at unselected
//! positions, and a dense layer plus softmax head produce class
//! probabilities. During training, dense-layer weights attached to positions
//! outside every sample's routing plan stay bit-identical: their gradient is
//! exactly zero and the optimizer skips their state entirely.

mod adam;
mod checkpoint;
mod config;
mod extractor;
mod gru;
mod model;
mod routing;
mod train;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{ClassifierConfig, RoutingStrategy};
pub use extractor::{ConvExtractor, FeatureExtractor};
pub use gru::{GruGrads, GruParams};
pub use model::{
    apply_output_mask, classify_scan, embed_and_sequence, forward, loss_and_grads, loss_from_raw,
    rnn_forward, ClassifierOutput, FeatureMode, Grads, Params, SequenceFeatures,
};
pub use routing::{plan_aligned, plan_first_l, plan_for, RoutingPlan};
pub use train::{train, train_step, StepRecord, TrainOptions, TrainSample, Trainer};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("routing length l={l} out of range for t={t}")]
    BadLength { l: usize, t: usize },
    #[error("scan has {l} slices but padded length t={t}; refusing to truncate")]
    TooManySlices { l: usize, t: usize },
    #[error("non-finite value in forward/backward pass")]
    NumericalError,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid classifier config: {0}")]
    BadConfig(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Volume(#[from] crate::volume::VolumeError),
}
