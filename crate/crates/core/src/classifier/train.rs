//! Training: per-step batch loss, selective dense-weight updates, and the
//! seeded training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::model::{loss_and_grads, Grads, Params, SequenceFeatures};
use super::{ClassifierConfig, ClassifierError};
use crate::parallel::try_map_indexed;

/// One labeled training sample: features already routed into the padded
/// sequence (pre-dropout) plus the class index.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub features: SequenceFeatures,
    pub label: usize,
}

/// Cross-entropy loss over the batch and one optimizer step.
///
/// Dense-layer weights attached to positions outside every sample's plan
/// (the batch union) receive exactly zero gradient and are skipped by the
/// optimizer, so they stay bit-identical through the step.
pub fn train_step(
    batch: &[(&SequenceFeatures, usize)],
    params: &mut Params,
    adam: &mut Adam,
    lr: f64,
    workers: usize,
) -> Result<f64, ClassifierError> {
    if batch.is_empty() {
        return Err(ClassifierError::BadConfig("empty training batch".into()));
    }
    let per_sample = try_map_indexed(batch, workers, |_, &(sf, label)| {
        loss_and_grads(sf, params, label)
    })?;
    let mut total_loss = 0.0;
    let mut grads = Grads::zeros_like(params);
    for (loss, g) in &per_sample {
        total_loss += loss;
        grads.add_assign(g);
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    let loss = total_loss * scale;
    if !loss.is_finite() {
        return Err(ClassifierError::NumericalError);
    }

    let t = params.t();
    let selected: Vec<bool> = {
        let mut sel = vec![false; t];
        for (sf, _) in batch {
            for &pos in sf.plan().positions() {
                sel[pos] = true;
            }
        }
        sel
    };
    let frozen: Vec<usize> = (0..t).filter(|&p| !selected[p]).collect();
    adam.apply(params, &grads, lr, &frozen, params.rnn_units());
    Ok(loss)
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 1000,
            lr: 1e-4,
            batch_size: 5,
            seed: 0,
            workers: 1,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Owns the parameters, optimizer state, and the seeded sampling/dropout
/// stream for one training run.
pub struct Trainer {
    pub params: Params,
    pub cfg: ClassifierConfig,
    adam: Adam,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl Trainer {
    /// Initialize parameters from the seed. The same seed always yields the
    /// same initialization, batch order, and dropout draws.
    pub fn new(cfg: ClassifierConfig, seed: u64) -> Result<Self, ClassifierError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::init(&cfg, &mut rng)?;
        let adam = Adam::new(&params);
        Ok(Trainer {
            params,
            cfg,
            adam,
            rng,
            order: Vec::new(),
            cursor: 0,
        })
    }

    fn next_batch(&mut self, dataset_len: usize, batch_size: usize) -> Vec<usize> {
        let batch_size = batch_size.min(dataset_len);
        if self.order.len() != dataset_len || self.cursor + batch_size > self.order.len() {
            self.order = (0..dataset_len).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + batch_size].to_vec();
        self.cursor += batch_size;
        batch
    }

    /// One training step: sample a batch, apply dropout to the cached
    /// features, run [`train_step`].
    pub fn step(
        &mut self,
        dataset: &[TrainSample],
        lr: f64,
        batch_size: usize,
        workers: usize,
    ) -> Result<f64, ClassifierError> {
        if dataset.is_empty() {
            return Err(ClassifierError::BadConfig("empty dataset".into()));
        }
        let indices = self.next_batch(dataset.len(), batch_size);
        let dropped: Vec<(SequenceFeatures, usize)> = indices
            .iter()
            .map(|&i| {
                let s = &dataset[i];
                (
                    s.features.with_dropout(self.cfg.dropout_keep, &mut self.rng),
                    s.label,
                )
            })
            .collect();
        let batch: Vec<(&SequenceFeatures, usize)> =
            dropped.iter().map(|(sf, l)| (sf, *l)).collect();
        train_step(&batch, &mut self.params, &mut self.adam, lr, workers)
    }
}

/// Full training run over a fixed dataset; returns the trained parameters
/// and the per-step loss log.
pub fn train(
    dataset: &[TrainSample],
    cfg: ClassifierConfig,
    opts: TrainOptions,
) -> Result<(Params, Vec<StepRecord>), ClassifierError> {
    let mut trainer = Trainer::new(cfg, opts.seed)?;
    let mut log = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let loss = trainer.step(dataset, opts.lr, opts.batch_size, opts.workers)?;
        log.push(StepRecord {
            step,
            loss,
            lr: opts.lr,
        });
    }
    Ok((trainer.params, log))
}
