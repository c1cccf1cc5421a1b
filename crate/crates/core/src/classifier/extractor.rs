//! Per-slice feature extraction.
//!
//! The default backbone is a small 3-block convolutional net with global
//! average pooling, sized so desk-scale runs stay on CPU. The stack after the
//! conv blocks is pooling, per-slice feature standardization, then dropout
//! (applied by the caller at train time only). Heavier pretrained backbones
//! can plug in through [`FeatureExtractor`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::volume::SliceImage;

/// Maps one preprocessed slice to a fixed-dimension feature vector.
/// Implementations must be deterministic and safe to call concurrently.
pub trait FeatureExtractor: Send + Sync {
    fn feature_dim(&self) -> usize;

    /// Features of a slice already masked and resized to the model's input
    /// size. The output is pre-dropout.
    fn extract(&self, slice: &SliceImage) -> Vec<f64>;
}

/// 3x3 convolution parameters, weights laid out (out, in, ky, kx).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvLayer {
    pub(crate) weight: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    pub(crate) in_ch: usize,
    pub(crate) out_ch: usize,
}

impl ConvLayer {
    fn init(in_ch: usize, out_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (in_ch * 9) as f64;
        let bound = (2.0 / fan_in).sqrt();
        let weight = (0..out_ch * in_ch * 9)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let bias = (0..out_ch).map(|_| rng.gen_range(-0.01..0.01)).collect();
        ConvLayer {
            weight,
            bias,
            in_ch,
            out_ch,
        }
    }

    /// Convolve with padding 1, stride 1, then ReLU. Planes are (c, h, w)
    /// row-major.
    fn forward(&self, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.out_ch * h * w];
        for oc in 0..self.out_ch {
            let bias = self.bias[oc];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias;
                    for ic in 0..self.in_ch {
                        let plane = &input[ic * h * w..(ic + 1) * h * w];
                        let wbase = ((oc * self.in_ch) + ic) * 9;
                        for ky in 0..3usize {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for kx in 0..3usize {
                                let sx = x as isize + kx as isize - 1;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                acc += self.weight[wbase + ky * 3 + kx]
                                    * plane[sy as usize * w + sx as usize];
                            }
                        }
                    }
                    out[oc * h * w + y * w + x] = acc.max(0.0);
                }
            }
        }
        out
    }
}

/// 2x2 average pooling with stride 2; dimensions of 1 pass through.
fn avg_pool(input: &[f64], ch: usize, h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let oh = (h / 2).max(1);
    let ow = (w / 2).max(1);
    let mut out = vec![0.0; ch * oh * ow];
    for c in 0..ch {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let (y0, x0) = (y * 2, x * 2);
                let y1 = (y0 + 1).min(h - 1);
                let x1 = (x0 + 1).min(w - 1);
                let sum =
                    plane[y0 * w + x0] + plane[y0 * w + x1] + plane[y1 * w + x0] + plane[y1 * w + x1];
                out[c * oh * ow + y * ow + x] = sum / 4.0;
            }
        }
    }
    (out, oh, ow)
}

/// Default per-slice backbone: three conv/ReLU/pool blocks, global average
/// pooling, then standardization across the feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvExtractor {
    pub(crate) layers: Vec<ConvLayer>,
    feature_dim: usize,
}

impl ConvExtractor {
    pub fn init(feature_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(feature_dim >= 1);
        let c1 = (feature_dim / 4).max(1);
        let c2 = (feature_dim / 2).max(1);
        let layers = vec![
            ConvLayer::init(1, c1, rng),
            ConvLayer::init(c1, c2, rng),
            ConvLayer::init(c2, feature_dim, rng),
        ];
        ConvExtractor {
            layers,
            feature_dim,
        }
    }

    pub(crate) fn from_parts(layers: Vec<ConvLayer>, feature_dim: usize) -> Self {
        ConvExtractor {
            layers,
            feature_dim,
        }
    }
}

impl FeatureExtractor for ConvExtractor {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn extract(&self, slice: &SliceImage) -> Vec<f64> {
        let (mut h, mut w) = slice.dims();
        let mut data: Vec<f64> = slice.pixels().iter().map(|&p| p as f64).collect();
        for layer in &self.layers {
            data = layer.forward(&data, h, w);
            let (pooled, oh, ow) = avg_pool(&data, layer.out_ch, h, w);
            data = pooled;
            h = oh;
            w = ow;
        }
        // global average pooling per channel
        let plane = h * w;
        let mut features: Vec<f64> = (0..self.feature_dim)
            .map(|c| data[c * plane..(c + 1) * plane].iter().sum::<f64>() / plane as f64)
            .collect();
        // standardize across the feature dimension so downstream layers see
        // O(1) inputs regardless of backbone scaling
        let mean = features.iter().sum::<f64>() / features.len() as f64;
        let var = features.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / features.len() as f64;
        let denom = var.sqrt() + 1e-6;
        for v in &mut features {
            *v = (*v - mean) / denom;
        }
        features
    }
}

/// Inverted dropout on a feature row: kept entries scale by `1/keep`.
/// `keep >= 1` is a no-op and draws nothing from the generator.
pub(crate) fn apply_dropout(row: &mut [f64], keep: f64, rng: &mut ChaCha8Rng) {
    if keep >= 1.0 {
        return;
    }
    for v in row.iter_mut() {
        if rng.gen::<f64>() < keep {
            *v /= keep;
        } else {
            *v = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn extract_is_deterministic_and_sized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ex = ConvExtractor::init(8, &mut rng);
        let slice = SliceImage::from_fn(16, 16, |x, y| ((x * y) % 7) as f32 / 7.0).unwrap();
        let a = ex.extract(&slice);
        let b = ex.extract(&slice);
        assert_eq!(a.len(), 8);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn different_inputs_give_different_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ex = ConvExtractor::init(8, &mut rng);
        let bright = SliceImage::constant(16, 16, 0.9).unwrap();
        let dim = SliceImage::constant(16, 16, 0.1).unwrap();
        assert_ne!(ex.extract(&bright), ex.extract(&dim));
    }

    #[test]
    fn dropout_keep_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut row = vec![1.0, -2.0, 3.0];
        apply_dropout(&mut row, 1.0, &mut rng);
        assert_eq!(row, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn dropout_scales_kept_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut row = vec![1.0; 1000];
        apply_dropout(&mut row, 0.8, &mut rng);
        let kept = row.iter().filter(|&&v| v != 0.0).count();
        assert!(row.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
        // keep rate should land near 0.8
        assert!((kept as f64 / 1000.0 - 0.8).abs() < 0.06);
    }
}
