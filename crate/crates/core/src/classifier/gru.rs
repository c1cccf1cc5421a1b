//! Single one-directional GRU over the padded sequence, with the hand-rolled
//! backward pass used by training.
//!
//! Gate equations, with `x` the step input and `h` the previous hidden state:
//!
//! ```text
//! z = sigmoid(x Wz + h Uz + bz)
//! r = sigmoid(x Wr + h Ur + br)
//! n = tanh(x Wn + r * (h Un) + bn)
//! h' = (1 - z) * n + z * h
//! ```

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub wz: Array2<f64>,
    pub wr: Array2<f64>,
    pub wn: Array2<f64>,
    pub uz: Array2<f64>,
    pub ur: Array2<f64>,
    pub un: Array2<f64>,
    pub bz: Array1<f64>,
    pub br: Array1<f64>,
    pub bn: Array1<f64>,
}

impl GruParams {
    pub fn init(input_dim: usize, units: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (units as f64).sqrt();
        let mut mat = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
        };
        let wz = mat(input_dim, units);
        let wr = mat(input_dim, units);
        let wn = mat(input_dim, units);
        let uz = mat(units, units);
        let ur = mat(units, units);
        let un = mat(units, units);
        GruParams {
            wz,
            wr,
            wn,
            uz,
            ur,
            un,
            bz: Array1::zeros(units),
            br: Array1::zeros(units),
            bn: Array1::zeros(units),
        }
    }

    pub fn units(&self) -> usize {
        self.uz.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.wz.nrows()
    }
}

/// Forward intermediates kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct GruTrace {
    /// Hidden states h_1..h_t, one row per step.
    pub h: Array2<f64>,
    pub(crate) z: Array2<f64>,
    pub(crate) r: Array2<f64>,
    pub(crate) n: Array2<f64>,
    /// Cached h_prev . Un per step.
    pub(crate) hun: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Run the GRU over all rows of `xs` (t x input_dim), starting from a zero
/// hidden state.
pub fn gru_forward(params: &GruParams, xs: &Array2<f64>) -> GruTrace {
    let t = xs.nrows();
    let units = params.units();
    let mut h = Array2::zeros((t, units));
    let mut z = Array2::zeros((t, units));
    let mut r = Array2::zeros((t, units));
    let mut n = Array2::zeros((t, units));
    let mut hun = Array2::zeros((t, units));
    let mut h_prev: Array1<f64> = Array1::zeros(units);
    for s in 0..t {
        let x = xs.row(s);
        let z_s = (&x.dot(&params.wz) + &h_prev.dot(&params.uz) + &params.bz).mapv(sigmoid);
        let r_s = (&x.dot(&params.wr) + &h_prev.dot(&params.ur) + &params.br).mapv(sigmoid);
        let hun_s = h_prev.dot(&params.un);
        let n_s = (&x.dot(&params.wn) + &(&r_s * &hun_s) + &params.bn).mapv(f64::tanh);
        let h_s = (1.0 - &z_s) * &n_s + &z_s * &h_prev;
        z.row_mut(s).assign(&z_s);
        r.row_mut(s).assign(&r_s);
        n.row_mut(s).assign(&n_s);
        hun.row_mut(s).assign(&hun_s);
        h.row_mut(s).assign(&h_s);
        h_prev = h_s;
    }
    GruTrace { h, z, r, n, hun }
}

#[derive(Debug, Clone)]
pub struct GruGrads {
    pub wz: Array2<f64>,
    pub wr: Array2<f64>,
    pub wn: Array2<f64>,
    pub uz: Array2<f64>,
    pub ur: Array2<f64>,
    pub un: Array2<f64>,
    pub bz: Array1<f64>,
    pub br: Array1<f64>,
    pub bn: Array1<f64>,
}

impl GruGrads {
    pub fn zeros_like(params: &GruParams) -> Self {
        GruGrads {
            wz: Array2::zeros(params.wz.raw_dim()),
            wr: Array2::zeros(params.wr.raw_dim()),
            wn: Array2::zeros(params.wn.raw_dim()),
            uz: Array2::zeros(params.uz.raw_dim()),
            ur: Array2::zeros(params.ur.raw_dim()),
            un: Array2::zeros(params.un.raw_dim()),
            bz: Array1::zeros(params.bz.raw_dim()),
            br: Array1::zeros(params.br.raw_dim()),
            bn: Array1::zeros(params.bn.raw_dim()),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for m in [
            &mut self.wz,
            &mut self.wr,
            &mut self.wn,
            &mut self.uz,
            &mut self.ur,
            &mut self.un,
        ] {
            m.mapv_inplace(|v| v * factor);
        }
        for b in [&mut self.bz, &mut self.br, &mut self.bn] {
            b.mapv_inplace(|v| v * factor);
        }
    }

    pub fn add_assign(&mut self, other: &GruGrads) {
        self.wz += &other.wz;
        self.wr += &other.wr;
        self.wn += &other.wn;
        self.uz += &other.uz;
        self.ur += &other.ur;
        self.un += &other.un;
        self.bz += &other.bz;
        self.br += &other.br;
        self.bn += &other.bn;
    }
}

fn outer_acc(acc: &mut Array2<f64>, col: &Array1<f64>, row: &Array1<f64>) {
    for (i, &c) in col.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let mut acc_row = acc.row_mut(i);
        acc_row.scaled_add(c, row);
    }
}

/// Backpropagation through time. `d_h` holds the loss gradient w.r.t. each
/// output row of [`gru_forward`].
pub fn gru_backward(
    params: &GruParams,
    xs: &Array2<f64>,
    trace: &GruTrace,
    d_h: &Array2<f64>,
) -> GruGrads {
    let t = xs.nrows();
    let units = params.units();
    let mut grads = GruGrads::zeros_like(params);
    let mut dh: Array1<f64> = d_h.row(t - 1).to_owned();
    for s in (0..t).rev() {
        let x = xs.row(s).to_owned();
        let z = trace.z.row(s);
        let r = trace.r.row(s);
        let n = trace.n.row(s);
        let hun = trace.hun.row(s);
        let h_prev: Array1<f64> = if s == 0 {
            Array1::zeros(units)
        } else {
            trace.h.row(s - 1).to_owned()
        };

        // h = (1 - z) * n + z * h_prev
        let dz_gate = &dh * &(&h_prev - &n);
        let dn = &dh * &(1.0 - &z);
        let mut dh_prev = &dh * &z;

        // n = tanh(x Wn + r * hun + bn)
        let dpre_n = &dn * &(1.0 - &n * &n);
        outer_acc(&mut grads.wn, &x, &dpre_n);
        grads.bn += &dpre_n;
        let dr = &dpre_n * &hun;
        let dhun = &dpre_n * &r;
        outer_acc(&mut grads.un, &h_prev, &dhun);
        dh_prev += &dhun.dot(&params.un.t());

        // r = sigmoid(x Wr + h_prev Ur + br)
        let dpre_r = &dr * &(&r * &(1.0 - &r));
        outer_acc(&mut grads.wr, &x, &dpre_r);
        grads.br += &dpre_r;
        outer_acc(&mut grads.ur, &h_prev, &dpre_r);
        dh_prev += &dpre_r.dot(&params.ur.t());

        // z = sigmoid(x Wz + h_prev Uz + bz)
        let dpre_z = &dz_gate * &(&z * &(1.0 - &z));
        outer_acc(&mut grads.wz, &x, &dpre_z);
        grads.bz += &dpre_z;
        outer_acc(&mut grads.uz, &h_prev, &dpre_z);
        dh_prev += &dpre_z.dot(&params.uz.t());

        if s > 0 {
            dh = dh_prev + d_h.row(s - 1).to_owned();
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Axis as NdAxis;
    use rand::SeedableRng;

    fn small_setup() -> (GruParams, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = GruParams::init(3, 4, &mut rng);
        let xs = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 3 + j) as f64 * 0.13).sin());
        (params, xs)
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let (params, xs) = small_setup();
        let a = gru_forward(&params, &xs);
        let b = gru_forward(&params, &xs);
        assert_eq!(a.h.dim(), (5, 4));
        assert_eq!(a.h, b.h);
    }

    /// Scalar loss L = sum(h * coeff); finite differences on every parameter.
    #[test]
    fn backward_matches_finite_differences() {
        let (mut params, xs) = small_setup();
        let coeff = Array2::from_shape_fn((5, 4), |(i, j)| ((i + 2 * j) as f64 * 0.31).cos());
        let loss = |p: &GruParams| -> f64 {
            let tr = gru_forward(p, &xs);
            (&tr.h * &coeff).sum_axis(NdAxis(0)).sum()
        };
        let trace = gru_forward(&params, &xs);
        let grads = gru_backward(&params, &xs, &trace, &coeff);

        let eps = 1e-6;
        macro_rules! check_field {
            ($field:ident) => {
                for idx in 0..params.$field.len() {
                    let orig = params.$field.as_slice().unwrap()[idx];
                    params.$field.as_slice_mut().unwrap()[idx] = orig + eps;
                    let lp = loss(&params);
                    params.$field.as_slice_mut().unwrap()[idx] = orig - eps;
                    let lm = loss(&params);
                    params.$field.as_slice_mut().unwrap()[idx] = orig;
                    let fd = (lp - lm) / (2.0 * eps);
                    let analytic = grads.$field.as_slice().unwrap()[idx];
                    assert!(
                        (fd - analytic).abs() < 1e-6 * (1.0 + analytic.abs()),
                        "{}[{idx}]: fd {fd} vs analytic {analytic}",
                        stringify!($field)
                    );
                }
            };
        }
        check_field!(wz);
        check_field!(wr);
        check_field!(wn);
        check_field!(uz);
        check_field!(ur);
        check_field!(un);
        check_field!(bz);
        check_field!(br);
        check_field!(bn);
    }
}
