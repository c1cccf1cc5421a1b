pub mod evaluate;
pub mod overlay;
pub mod segment;
pub mod train;

use anyhow::Result;
use ctseg::backend::{BackendSelection, Embedder, FakeEmbedder, FakeSegmenter, Segmenter};

use crate::config::RunConfig;

/// Instantiate the configured backend pair. Checkpoint adapters are not
/// bundled in this build; the selector is recognized so configs stay
/// portable, but resolving one is an error.
pub fn build_backends(cfg: &RunConfig) -> Result<(Box<dyn Segmenter>, Box<dyn Embedder>)> {
    match cfg.backend_selection()? {
        BackendSelection::Fake => {
            let (seg, emb) = match &cfg.run.fake_config {
                Some(path) => {
                    ctseg::backend::fake::load_fake_config(path).map_err(|e| anyhow::anyhow!("{e}"))?
                }
                None => (FakeSegmenter::new(), FakeEmbedder::new()),
            };
            Ok((Box::new(seg), Box::new(emb)))
        }
        BackendSelection::Checkpoint(path) => Err(anyhow::anyhow!(
            "checkpoint adapter for {} is not available in this build; use `backend = \"fake\"`",
            path.display()
        )),
    }
}
