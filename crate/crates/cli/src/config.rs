//! Run configuration: TOML file with sections, environment-variable
//! overrides, then command-line flags, in increasing precedence.
//!
//! Every key has a default, so an absent file or a partial file works. The
//! canonical serialized form has a stable section and key order.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ctseg::backend::{BackendSelection, TextPromptSet};
use ctseg::classifier::{ClassifierConfig, RoutingStrategy};
use ctseg::pipeline::{PipelineConfig, RoiMode, RoiTarget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub workers: usize,
    pub data_root: PathBuf,
    pub output_root: PathBuf,
    /// `fake` or `checkpoint:<path>`.
    pub backend: String,
    /// Fake-backend configuration file (fingerprint/mask and prompt tables).
    pub fake_config: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            workers: 1,
            data_root: PathBuf::from("data"),
            output_root: PathBuf::from("out"),
            backend: "fake".into(),
            fake_config: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub name: String,
    pub prompts: Vec<String>,
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetSection {
            name: "roi".into(),
            prompts: vec!["the region of interest".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub tau_fraction: f64,
    pub grid_n: usize,
    /// `per_lung` or `single`.
    pub roi_mode: String,
    pub targets: Vec<TargetSection>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let defaults = PipelineConfig::default();
        PipelineSection {
            tau_fraction: defaults.tau_fraction,
            grid_n: defaults.grid_n,
            roi_mode: defaults.roi_mode.as_str().into(),
            targets: defaults
                .targets
                .into_iter()
                .map(|t| TargetSection {
                    name: t.name,
                    prompts: t.prompts.prompts().to_vec(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub t: usize,
    pub rnn_units: usize,
    pub dense_units: usize,
    pub dropout_keep: f64,
    pub num_classes: usize,
    /// `aligned` or `first_l`.
    pub routing: String,
    pub feature_dim: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let d = ClassifierConfig::default();
        ClassifierSection {
            t: d.t,
            rnn_units: d.rnn_units,
            dense_units: d.dense_units,
            dropout_keep: d.dropout_keep,
            num_classes: d.num_classes,
            routing: d.routing.as_str().into(),
            feature_dim: d.feature_dim,
            input_height: d.input_hw.0,
            input_width: d.input_hw.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            learning_rate: 1e-4,
            batch_size: 5,
            steps: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub pipeline: PipelineSection,
    pub classifier: ClassifierSection,
    pub training: TrainingSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Canonical serialized form: stable section and key order.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Apply `CTSEG_<SECTION>_<KEY>` environment overrides. Prompt targets
    /// are file/flag-only.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        fn set<T: std::str::FromStr>(slot: &mut T, key: &str) -> Result<()>
        where
            T::Err: std::fmt::Display,
        {
            if let Ok(raw) = std::env::var(key) {
                *slot = raw
                    .parse()
                    .map_err(|e| anyhow::anyhow!("bad {key}={raw:?}: {e}"))?;
            }
            Ok(())
        }
        set(&mut self.run.seed, "CTSEG_RUN_SEED")?;
        set(&mut self.run.workers, "CTSEG_RUN_WORKERS")?;
        set(&mut self.run.data_root, "CTSEG_RUN_DATA_ROOT")?;
        set(&mut self.run.output_root, "CTSEG_RUN_OUTPUT_ROOT")?;
        set(&mut self.run.backend, "CTSEG_RUN_BACKEND")?;
        if let Ok(raw) = std::env::var("CTSEG_RUN_FAKE_CONFIG") {
            self.run.fake_config = Some(PathBuf::from(raw));
        }
        set(&mut self.pipeline.tau_fraction, "CTSEG_PIPELINE_TAU_FRACTION")?;
        set(&mut self.pipeline.grid_n, "CTSEG_PIPELINE_GRID_N")?;
        set(&mut self.pipeline.roi_mode, "CTSEG_PIPELINE_ROI_MODE")?;
        set(&mut self.classifier.t, "CTSEG_CLASSIFIER_T")?;
        set(&mut self.classifier.rnn_units, "CTSEG_CLASSIFIER_RNN_UNITS")?;
        set(&mut self.classifier.dense_units, "CTSEG_CLASSIFIER_DENSE_UNITS")?;
        set(&mut self.classifier.dropout_keep, "CTSEG_CLASSIFIER_DROPOUT_KEEP")?;
        set(&mut self.classifier.num_classes, "CTSEG_CLASSIFIER_NUM_CLASSES")?;
        set(&mut self.classifier.routing, "CTSEG_CLASSIFIER_ROUTING")?;
        set(&mut self.classifier.feature_dim, "CTSEG_CLASSIFIER_FEATURE_DIM")?;
        set(&mut self.classifier.input_height, "CTSEG_CLASSIFIER_INPUT_HEIGHT")?;
        set(&mut self.classifier.input_width, "CTSEG_CLASSIFIER_INPUT_WIDTH")?;
        set(&mut self.training.learning_rate, "CTSEG_TRAINING_LEARNING_RATE")?;
        set(&mut self.training.batch_size, "CTSEG_TRAINING_BATCH_SIZE")?;
        set(&mut self.training.steps, "CTSEG_TRAINING_STEPS")?;
        Ok(())
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let roi_mode = RoiMode::parse(&self.pipeline.roi_mode)
            .ok_or_else(|| anyhow::anyhow!("unknown roi_mode {:?}", self.pipeline.roi_mode))?;
        let mut targets = Vec::new();
        for t in &self.pipeline.targets {
            targets.push(RoiTarget {
                name: t.name.clone(),
                prompts: TextPromptSet::new(t.prompts.clone())
                    .map_err(|e| anyhow::anyhow!("target {:?}: {e}", t.name))?,
            });
        }
        let cfg = PipelineConfig {
            tau_fraction: self.pipeline.tau_fraction,
            grid_n: self.pipeline.grid_n,
            roi_mode,
            targets,
        };
        cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(cfg)
    }

    pub fn classifier_config(&self) -> Result<ClassifierConfig> {
        let routing = RoutingStrategy::parse(&self.classifier.routing)
            .ok_or_else(|| anyhow::anyhow!("unknown routing {:?}", self.classifier.routing))?;
        let cfg = ClassifierConfig {
            t: self.classifier.t,
            rnn_units: self.classifier.rnn_units,
            dense_units: self.classifier.dense_units,
            dropout_keep: self.classifier.dropout_keep,
            num_classes: self.classifier.num_classes,
            routing,
            feature_dim: self.classifier.feature_dim,
            input_hw: (self.classifier.input_height, self.classifier.input_width),
        };
        cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(cfg)
    }

    pub fn backend_selection(&self) -> Result<BackendSelection> {
        BackendSelection::parse(&self.run.backend).map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.workers < 1 {
            bail!("run.workers must be >= 1");
        }
        if self.training.batch_size < 1 {
            bail!("training.batch_size must be >= 1");
        }
        self.pipeline_config()?;
        self.classifier_config()?;
        self.backend_selection()?;
        Ok(())
    }
}
