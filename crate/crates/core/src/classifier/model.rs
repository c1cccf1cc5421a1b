//! Model assembly: sequence features, forward pass, loss, and gradients.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use super::extractor::{apply_dropout, ConvExtractor, FeatureExtractor};
use super::gru::{gru_backward, gru_forward, GruGrads, GruParams, GruTrace};
use super::routing::{plan_for, RoutingPlan};
use super::{ClassifierConfig, ClassifierError};
use crate::mask::Mask;
use crate::parallel::try_map_indexed;
use crate::volume::{resize_slice, ScanVolume};

/// Per-slice features placed at their routing-plan positions within the
/// padded length; rows at non-plan positions are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeatures {
    features: Array2<f64>,
    plan: RoutingPlan,
}

impl SequenceFeatures {
    /// Place `rows` (one per plan position, in order) into a t x feature_dim
    /// matrix with zeros elsewhere.
    pub fn from_rows(
        t: usize,
        feature_dim: usize,
        rows: &[Vec<f64>],
        plan: RoutingPlan,
    ) -> Result<Self, ClassifierError> {
        if rows.len() != plan.l() {
            return Err(ClassifierError::DimensionMismatch(format!(
                "{} feature rows for plan of length {}",
                rows.len(),
                plan.l()
            )));
        }
        if plan.t() != t {
            return Err(ClassifierError::DimensionMismatch(format!(
                "plan t={} vs requested t={t}",
                plan.t()
            )));
        }
        let mut features = Array2::zeros((t, feature_dim));
        for (row, &pos) in rows.iter().zip(plan.positions()) {
            if row.len() != feature_dim {
                return Err(ClassifierError::DimensionMismatch(format!(
                    "feature row of length {} expected {feature_dim}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                features[(pos, j)] = v;
            }
        }
        Ok(SequenceFeatures { features, plan })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn plan(&self) -> &RoutingPlan {
        &self.plan
    }

    pub fn t(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Dropout over the plan rows, in row order. Used by the training loop;
    /// inference never calls this.
    pub fn with_dropout(&self, keep: f64, rng: &mut ChaCha8Rng) -> SequenceFeatures {
        if keep >= 1.0 {
            return self.clone();
        }
        let mut features = self.features.clone();
        for &pos in self.plan.positions() {
            let mut row = features.row_mut(pos);
            apply_dropout(row.as_slice_mut().expect("row is contiguous"), keep, rng);
        }
        SequenceFeatures {
            features,
            plan: self.plan.clone(),
        }
    }
}

/// Class probabilities; entries in `[0, 1]` summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierOutput {
    probabilities: Vec<f64>,
}

impl ClassifierOutput {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }
}

/// All model parameters. The extractor stays at its seeded initialization
/// during training; the recurrent layer, dense layer, and output head train.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub extractor: ConvExtractor,
    pub gru: GruParams,
    /// Dense layer, (t * rnn_units) x dense_units.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// Output head, dense_units x num_classes.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Params {
    pub fn init(cfg: &ClassifierConfig, rng: &mut ChaCha8Rng) -> Result<Self, ClassifierError> {
        cfg.validate()?;
        use rand::Rng;
        let extractor = ConvExtractor::init(cfg.feature_dim, rng);
        let gru = GruParams::init(cfg.feature_dim, cfg.rnn_units, rng);
        let flat = cfg.t * cfg.rnn_units;
        let bound1 = (1.0 / flat as f64).sqrt();
        let w1 = Array2::from_shape_fn((flat, cfg.dense_units), |_| {
            rng.gen_range(-bound1..bound1)
        });
        let bound2 = (1.0 / cfg.dense_units as f64).sqrt();
        let w2 = Array2::from_shape_fn((cfg.dense_units, cfg.num_classes), |_| {
            rng.gen_range(-bound2..bound2)
        });
        Ok(Params {
            extractor,
            gru,
            w1,
            b1: Array1::zeros(cfg.dense_units),
            w2,
            b2: Array1::zeros(cfg.num_classes),
        })
    }

    pub fn rnn_units(&self) -> usize {
        self.gru.units()
    }

    pub fn t(&self) -> usize {
        self.w1.nrows() / self.gru.units()
    }

    pub fn num_classes(&self) -> usize {
        self.b2.len()
    }
}

/// Raw recurrent outputs over the padded sequence, one row per position.
pub fn rnn_forward(sf: &SequenceFeatures, params: &Params) -> Array2<f64> {
    gru_forward(&params.gru, sf.features()).h
}

/// The mask layer: zero every row at a non-plan position.
pub fn apply_output_mask(raw: &Array2<f64>, plan: &RoutingPlan) -> Array2<f64> {
    let mut masked = Array2::zeros(raw.raw_dim());
    for &pos in plan.positions() {
        masked.row_mut(pos).assign(&raw.row(pos));
    }
    masked
}

struct HeadTrace {
    flat: Array1<f64>,
    pre1: Array1<f64>,
    act: Array1<f64>,
    probs: Array1<f64>,
}

fn head_forward(masked: &Array2<f64>, params: &Params) -> Result<HeadTrace, ClassifierError> {
    let flat = Array1::from_iter(masked.iter().copied());
    if flat.len() != params.w1.nrows() {
        return Err(ClassifierError::DimensionMismatch(format!(
            "concatenated recurrent output of {} vs dense input of {}",
            flat.len(),
            params.w1.nrows()
        )));
    }
    let pre1 = flat.dot(&params.w1) + &params.b1;
    let act = pre1.mapv(|v| v.max(0.0));
    let logits = act.dot(&params.w2) + &params.b2;
    let probs = softmax(&logits)?;
    Ok(HeadTrace {
        flat,
        pre1,
        act,
        probs,
    })
}

fn softmax(logits: &Array1<f64>) -> Result<Array1<f64>, ClassifierError> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(ClassifierError::NumericalError);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|v| (v - max).exp());
    let sum = exps.sum();
    if !(sum.is_finite() && sum > 0.0) {
        return Err(ClassifierError::NumericalError);
    }
    Ok(exps / sum)
}

/// Full forward pass: recurrent layer, mask layer, concatenation, dense
/// layer, softmax head.
pub fn forward(
    sf: &SequenceFeatures,
    params: &Params,
) -> Result<ClassifierOutput, ClassifierError> {
    let raw = rnn_forward(sf, params);
    let masked = apply_output_mask(&raw, sf.plan());
    let head = head_forward(&masked, params)?;
    if head.probs.iter().any(|p| !p.is_finite()) {
        return Err(ClassifierError::NumericalError);
    }
    Ok(ClassifierOutput {
        probabilities: head.probs.to_vec(),
    })
}

/// Cross-entropy of the label under the head applied to externally supplied
/// raw recurrent outputs. This is the seam instrumentation uses to show the
/// mask layer makes non-plan positions irrelevant.
pub fn loss_from_raw(
    raw: &Array2<f64>,
    plan: &RoutingPlan,
    params: &Params,
    label: usize,
) -> Result<f64, ClassifierError> {
    let masked = apply_output_mask(raw, plan);
    let head = head_forward(&masked, params)?;
    cross_entropy(&head.probs, label)
}

fn cross_entropy(probs: &Array1<f64>, label: usize) -> Result<f64, ClassifierError> {
    if label >= probs.len() {
        return Err(ClassifierError::DimensionMismatch(format!(
            "label {label} for {} classes",
            probs.len()
        )));
    }
    let p = probs[label].max(1e-300);
    let loss = -p.ln();
    if !loss.is_finite() {
        return Err(ClassifierError::NumericalError);
    }
    Ok(loss)
}

/// Gradients for the trainable tensors (the extractor is frozen).
#[derive(Debug, Clone)]
pub struct Grads {
    pub gru: GruGrads,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Grads {
    pub fn zeros_like(params: &Params) -> Self {
        Grads {
            gru: GruGrads::zeros_like(&params.gru),
            w1: Array2::zeros(params.w1.raw_dim()),
            b1: Array1::zeros(params.b1.raw_dim()),
            w2: Array2::zeros(params.w2.raw_dim()),
            b2: Array1::zeros(params.b2.raw_dim()),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.gru.scale(factor);
        self.w1.mapv_inplace(|v| v * factor);
        self.b1.mapv_inplace(|v| v * factor);
        self.w2.mapv_inplace(|v| v * factor);
        self.b2.mapv_inplace(|v| v * factor);
    }

    pub fn add_assign(&mut self, other: &Grads) {
        self.gru.add_assign(&other.gru);
        self.w1 += &other.w1;
        self.b1 += &other.b1;
        self.w2 += &other.w2;
        self.b2 += &other.b2;
    }
}

/// Loss and gradients for one sample. Rows of the dense-layer gradient
/// attached to non-plan positions come out exactly zero because the mask
/// layer zeroes their inputs.
pub fn loss_and_grads(
    sf: &SequenceFeatures,
    params: &Params,
    label: usize,
) -> Result<(f64, Grads), ClassifierError> {
    let trace: GruTrace = gru_forward(&params.gru, sf.features());
    let masked = apply_output_mask(&trace.h, sf.plan());
    let head = head_forward(&masked, params)?;
    let loss = cross_entropy(&head.probs, label)?;

    // softmax + cross-entropy: dL/dlogits = p - onehot(y)
    let mut dlogits = head.probs.clone();
    dlogits[label] -= 1.0;

    let mut grads = Grads::zeros_like(params);
    // head
    for (i, &a) in head.act.iter().enumerate() {
        if a != 0.0 {
            let mut row = grads.w2.row_mut(i);
            row.scaled_add(a, &dlogits);
        }
    }
    grads.b2.assign(&dlogits);
    let dact = dlogits.dot(&params.w2.t());
    // dense layer through the ReLU
    let dpre1 = ndarray::Zip::from(&dact)
        .and(&head.pre1)
        .map_collect(|&d, &p| if p > 0.0 { d } else { 0.0 });
    for (i, &u) in head.flat.iter().enumerate() {
        if u != 0.0 {
            let mut row = grads.w1.row_mut(i);
            row.scaled_add(u, &dpre1);
        }
    }
    grads.b1.assign(&dpre1);
    let dflat = dpre1.dot(&params.w1.t());
    // un-flatten and undo the mask layer: non-plan rows get zero gradient
    let t = sf.t();
    let units = params.rnn_units();
    let dmasked = Array2::from_shape_vec((t, units), dflat.to_vec())
        .expect("dense input reshapes to t x rnn_units");
    let mut d_h = Array2::zeros((t, units));
    for &pos in sf.plan().positions() {
        d_h.row_mut(pos).assign(&dmasked.row(pos));
    }
    grads.gru = gru_backward(&params.gru, sf.features(), &trace, &d_h);
    if !loss.is_finite() {
        return Err(ClassifierError::NumericalError);
    }
    Ok((loss, grads))
}

/// Whether features are extracted for inference or with training-time
/// dropout.
pub enum FeatureMode<'a> {
    Inference,
    Train { rng: &'a mut ChaCha8Rng },
}

/// Mask each slice, resize to the model input size, extract per-slice
/// features, and place them at their routing-plan positions. Scans longer
/// than the padded length are refused.
pub fn embed_and_sequence(
    volume: &ScanVolume,
    masks: &[Mask],
    cfg: &ClassifierConfig,
    extractor: &dyn FeatureExtractor,
    mode: FeatureMode<'_>,
    workers: usize,
) -> Result<SequenceFeatures, ClassifierError> {
    cfg.validate()?;
    let l = volume.len();
    if l > cfg.t {
        return Err(ClassifierError::TooManySlices { l, t: cfg.t });
    }
    if masks.len() != l {
        return Err(ClassifierError::DimensionMismatch(format!(
            "{} masks for {l} slices",
            masks.len()
        )));
    }
    let plan = plan_for(cfg.routing, cfg.t, l)?;
    let indices: Vec<usize> = (0..l).collect();
    let mut rows = try_map_indexed(&indices, workers, |_, &i| {
        let slice = &volume.slices()[i];
        let masked = slice.masked(&masks[i])?;
        let resized = resize_slice(&masked, cfg.input_hw)?;
        Ok::<Vec<f64>, ClassifierError>(extractor.extract(&resized))
    })?;
    if let FeatureMode::Train { rng } = mode {
        for row in &mut rows {
            apply_dropout(row, cfg.dropout_keep, rng);
        }
    }
    SequenceFeatures::from_rows(cfg.t, extractor.feature_dim(), &rows, plan)
}

/// Inference: feature extraction and sequencing followed by the forward
/// pass, dropout disabled.
pub fn classify_scan(
    volume: &ScanVolume,
    masks: &[Mask],
    cfg: &ClassifierConfig,
    params: &Params,
    workers: usize,
) -> Result<ClassifierOutput, ClassifierError> {
    let sf = embed_and_sequence(
        volume,
        masks,
        cfg,
        &params.extractor,
        FeatureMode::Inference,
        workers,
    )?;
    forward(&sf, params)
}
