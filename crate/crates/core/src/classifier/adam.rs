//! Adam with hard position freezing for the dense layer.
//!
//! Dense-layer rows attached to positions outside every sample's routing
//! plan are skipped entirely for the step: no parameter change and no
//! first/second-moment decay, so frozen weights stay bit-identical until a
//! later batch selects their position. Bias correction uses the global step
//! count.

use ndarray::Array2;

use super::model::{Grads, Params};

#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(params: &Params) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Grads::zeros_like(params),
            v: Grads::zeros_like(params),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn update_slice(
        &self,
        param: &mut [f64],
        grad: &[f64],
        m: &mut [f64],
        v: &mut [f64],
        lr: f64,
        bc1: f64,
        bc2: f64,
    ) {
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    /// One optimizer step. `frozen_positions` lists padded-sequence positions
    /// whose dense-layer rows must not move; `rnn_units` maps positions to
    /// row blocks.
    pub fn apply(
        &mut self,
        params: &mut Params,
        grads: &Grads,
        lr: f64,
        frozen_positions: &[usize],
        rnn_units: usize,
    ) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);

        macro_rules! dense2 {
            ($p:expr, $g:expr, $m:expr, $v:expr) => {
                self.update_slice(
                    $p.as_slice_mut().unwrap(),
                    $g.as_slice().unwrap(),
                    $m.as_slice_mut().unwrap(),
                    $v.as_slice_mut().unwrap(),
                    lr,
                    bc1,
                    bc2,
                )
            };
        }

        // The closures below split borrows manually since self is borrowed
        // by update_slice; take m/v out field by field.
        let mut m = std::mem::replace(&mut self.m, Grads::zeros_like(params));
        let mut v = std::mem::replace(&mut self.v, Grads::zeros_like(params));

        dense2!(params.gru.wz, grads.gru.wz, m.gru.wz, v.gru.wz);
        dense2!(params.gru.wr, grads.gru.wr, m.gru.wr, v.gru.wr);
        dense2!(params.gru.wn, grads.gru.wn, m.gru.wn, v.gru.wn);
        dense2!(params.gru.uz, grads.gru.uz, m.gru.uz, v.gru.uz);
        dense2!(params.gru.ur, grads.gru.ur, m.gru.ur, v.gru.ur);
        dense2!(params.gru.un, grads.gru.un, m.gru.un, v.gru.un);
        dense2!(params.gru.bz, grads.gru.bz, m.gru.bz, v.gru.bz);
        dense2!(params.gru.br, grads.gru.br, m.gru.br, v.gru.br);
        dense2!(params.gru.bn, grads.gru.bn, m.gru.bn, v.gru.bn);

        self.update_w1_with_freeze(
            &mut params.w1,
            &grads.w1,
            &mut m.w1,
            &mut v.w1,
            lr,
            bc1,
            bc2,
            frozen_positions,
            rnn_units,
        );
        dense2!(params.b1, grads.b1, m.b1, v.b1);
        dense2!(params.w2, grads.w2, m.w2, v.w2);
        dense2!(params.b2, grads.b2, m.b2, v.b2);

        self.m = m;
        self.v = v;
    }

    #[allow(clippy::too_many_arguments)]
    fn update_w1_with_freeze(
        &self,
        param: &mut Array2<f64>,
        grad: &Array2<f64>,
        m: &mut Array2<f64>,
        v: &mut Array2<f64>,
        lr: f64,
        bc1: f64,
        bc2: f64,
        frozen_positions: &[usize],
        rnn_units: usize,
    ) {
        let cols = param.ncols();
        let p = param.as_slice_mut().unwrap();
        let g = grad.as_slice().unwrap();
        let ms = m.as_slice_mut().unwrap();
        let vs = v.as_slice_mut().unwrap();
        let rows = p.len() / cols;
        for row in 0..rows {
            let pos = row / rnn_units;
            if frozen_positions.binary_search(&pos).is_ok() {
                continue;
            }
            let span = row * cols..(row + 1) * cols;
            self.update_slice(
                &mut p[span.clone()],
                &g[span.clone()],
                &mut ms[span.clone()],
                &mut vs[span],
                lr,
                bc1,
                bc2,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassifierConfig, RoutingStrategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_params() -> Params {
        let cfg = ClassifierConfig {
            t: 4,
            rnn_units: 2,
            dense_units: 3,
            dropout_keep: 1.0,
            num_classes: 2,
            routing: RoutingStrategy::FirstL,
            feature_dim: 3,
            input_hw: (4, 4),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        Params::init(&cfg, &mut rng).unwrap()
    }

    #[test]
    fn frozen_rows_are_untouched_and_keep_no_state() {
        let mut params = toy_params();
        let before = params.w1.clone();
        let mut grads = Grads::zeros_like(&params);
        grads.w1.fill(0.5);
        grads.b1.fill(0.1);
        let mut adam = Adam::new(&params);
        adam.apply(&mut params, &grads, 0.01, &[1, 3], 2);
        for row in 0..params.w1.nrows() {
            let pos = row / 2;
            let changed = params.w1.row(row) != before.row(row);
            if pos == 1 || pos == 3 {
                assert!(!changed, "frozen row {row} moved");
                assert!(adam.m.w1.row(row).iter().all(|&x| x == 0.0));
                assert!(adam.v.w1.row(row).iter().all(|&x| x == 0.0));
            } else {
                assert!(changed, "active row {row} did not move");
            }
        }
        assert!(params.b1.iter().zip(0..).all(|(&b, _)| b != 0.0));
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut params = toy_params();
        let snapshot = params.clone();
        let mut grads = Grads::zeros_like(&params);
        grads.w2.fill(1.0);
        grads.gru.wz.fill(-0.3);
        let mut adam = Adam::new(&params);
        adam.apply(&mut params, &grads, 0.0, &[], 2);
        assert_eq!(params, snapshot);
    }

    #[test]
    fn state_momentum_does_not_leak_into_frozen_rows_later() {
        // Row active in step 1 (nonzero grad), frozen in step 2: it must not
        // move in step 2 even though its momentum is nonzero.
        let mut params = toy_params();
        let mut grads = Grads::zeros_like(&params);
        grads.w1.fill(0.5);
        let mut adam = Adam::new(&params);
        adam.apply(&mut params, &grads, 0.01, &[], 2);
        let after_step1 = params.w1.clone();
        let zero = Grads::zeros_like(&params);
        adam.apply(&mut params, &zero, 0.01, &[0, 1, 2, 3], 2);
        assert_eq!(params.w1, after_step1);
    }
}
