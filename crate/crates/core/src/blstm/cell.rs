//! Peephole LSTM cell: forward step and its exact gradient.
//!
//! ```text
//! f = σ(Wxf x + Whf h' + wcf ⊙ c' + bf)
//! i = σ(Wxi x + Whi h' + wci ⊙ c' + bi)
//! c = f ⊙ c' + i ⊙ tanh(Wxc x + Whc h' + bc)
//! o = σ(Wxo x + Who h' + wco ⊙ c + bo)
//! h = o ⊙ tanh(c)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BlstmError;
use crate::linalg::{sigmoid, Mat};

/// One direction of one layer. Peepholes and biases are h × 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub wxi: Mat,
    pub wxf: Mat,
    pub wxo: Mat,
    pub wxc: Mat,
    pub whi: Mat,
    pub whf: Mat,
    pub who: Mat,
    pub whc: Mat,
    pub wci: Mat,
    pub wcf: Mat,
    pub wco: Mat,
    pub bi: Mat,
    pub bf: Mat,
    pub bo: Mat,
    pub bc: Mat,
}

pub const TENSOR_NAMES: [&str; 15] = [
    "Wxi", "Wxf", "Wxo", "Wxc", "Whi", "Whf", "Who", "Whc", "Wci", "Wcf", "Wco", "bi", "bf", "bo", "bc",
];

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let x = || Mat::zeros(hidden, input);
        let h = || Mat::zeros(hidden, hidden);
        let v = || Mat::zeros(hidden, 1);
        LstmParams {
            wxi: x(),
            wxf: x(),
            wxo: x(),
            wxc: x(),
            whi: h(),
            whf: h(),
            who: h(),
            whc: h(),
            wci: v(),
            wcf: v(),
            wco: v(),
            bi: v(),
            bf: v(),
            bo: v(),
            bc: v(),
        }
    }

    /// Uniform ±√(1/fan_in) weights, forget bias 1, other biases 0.
    pub fn init(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        let bx = (1.0 / input.max(1) as f64).sqrt();
        let bh = (1.0 / hidden as f64).sqrt();
        let mut p = LstmParams::zeros(hidden, input);
        for m in [&mut p.wxi, &mut p.wxf, &mut p.wxo, &mut p.wxc] {
            *m = Mat::uniform(hidden, input, bx, rng);
        }
        for m in [&mut p.whi, &mut p.whf, &mut p.who, &mut p.whc] {
            *m = Mat::uniform(hidden, hidden, bh, rng);
        }
        for m in [&mut p.wci, &mut p.wcf, &mut p.wco] {
            *m = Mat::uniform(hidden, 1, bh, rng);
        }
        p.bf.fill(1.0);
        p
    }

    pub fn hidden(&self) -> usize {
        self.bi.rows
    }

    pub fn input(&self) -> usize {
        self.wxi.cols
    }

    /// Tensors in `TENSOR_NAMES` order.
    pub fn tensors(&self) -> [&Mat; 15] {
        [
            &self.wxi, &self.wxf, &self.wxo, &self.wxc, &self.whi, &self.whf, &self.who, &self.whc, &self.wci,
            &self.wcf, &self.wco, &self.bi, &self.bf, &self.bo, &self.bc,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Mat; 15] {
        [
            &mut self.wxi,
            &mut self.wxf,
            &mut self.wxo,
            &mut self.wxc,
            &mut self.whi,
            &mut self.whf,
            &mut self.who,
            &mut self.whc,
            &mut self.wci,
            &mut self.wcf,
            &mut self.wco,
            &mut self.bi,
            &mut self.bf,
            &mut self.bo,
            &mut self.bc,
        ]
    }

    fn check(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(), BlstmError> {
        let h = self.hidden();
        let shapes_ok = self.tensors().iter().enumerate().all(|(k, m)| {
            let want = match k {
                0..=3 => (h, self.input()),
                4..=7 => (h, h),
                _ => (h, 1),
            };
            m.shape() == want
        });
        if !shapes_ok || x.len() != self.input() || h_prev.len() != h || c_prev.len() != h {
            return Err(BlstmError::ShapeMismatch(format!(
                "cell h={h} d_in={}: x={}, h_prev={}, c_prev={}",
                self.input(),
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        Ok(())
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn lstm_cell_step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>), BlstmError> {
    p.check(x, h_prev, c_prev)?;
    let s = step(p, x, h_prev, c_prev);
    Ok((s.h, s.c))
}

pub(crate) fn step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let n = p.hidden();
    let affine = |wx: &Mat, wh: &Mat, b: &Mat| {
        let mut a = b.data.clone();
        wx.mul_vec_add(x, &mut a);
        wh.mul_vec_add(h_prev, &mut a);
        a
    };
    let mut f = affine(&p.wxf, &p.whf, &p.bf);
    let mut i = affine(&p.wxi, &p.whi, &p.bi);
    let mut g = affine(&p.wxc, &p.whc, &p.bc);
    let mut o = affine(&p.wxo, &p.who, &p.bo);
    let mut c = vec![0.0; n];
    let mut tanh_c = vec![0.0; n];
    let mut h = vec![0.0; n];
    for k in 0..n {
        f[k] = sigmoid(f[k] + p.wcf.data[k] * c_prev[k]);
        i[k] = sigmoid(i[k] + p.wci.data[k] * c_prev[k]);
        g[k] = g[k].tanh();
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        o[k] = sigmoid(o[k] + p.wco.data[k] * c[k]);
        tanh_c[k] = c[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }
    StepCache { x: x.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), i, f, o, g, c, tanh_c, h }
}

/// Backpropagate one step. `dh` and `dc` are the total gradients arriving at
/// this step's h and c. Accumulates parameter gradients into `grad` and input
/// gradients into `dx`; returns (dh_prev, dc_prev).
pub(crate) fn step_backward(
    p: &LstmParams,
    s: &StepCache,
    dh: &[f64],
    dc_next: &[f64],
    grad: &mut LstmParams,
    dx: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = p.hidden();
    let mut dpre_o = vec![0.0; n];
    let mut dpre_f = vec![0.0; n];
    let mut dpre_i = vec![0.0; n];
    let mut dpre_g = vec![0.0; n];
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        let d_o = dh[k] * s.tanh_c[k];
        dpre_o[k] = d_o * s.o[k] * (1.0 - s.o[k]);
        let dc = dc_next[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dpre_o[k] * p.wco.data[k];
        dpre_f[k] = dc * s.c_prev[k] * s.f[k] * (1.0 - s.f[k]);
        dpre_i[k] = dc * s.g[k] * s.i[k] * (1.0 - s.i[k]);
        dpre_g[k] = dc * s.i[k] * (1.0 - s.g[k] * s.g[k]);
        dc_prev[k] = dc * s.f[k] + dpre_f[k] * p.wcf.data[k] + dpre_i[k] * p.wci.data[k];
        grad.wcf.data[k] += dpre_f[k] * s.c_prev[k];
        grad.wci.data[k] += dpre_i[k] * s.c_prev[k];
        grad.wco.data[k] += dpre_o[k] * s.c[k];
        grad.bf.data[k] += dpre_f[k];
        grad.bi.data[k] += dpre_i[k];
        grad.bo.data[k] += dpre_o[k];
        grad.bc.data[k] += dpre_g[k];
    }
    let mut dh_prev = vec![0.0; n];
    for (d, wx, wh, gx, gh) in [
        (&dpre_i, &p.wxi, &p.whi, &mut grad.wxi, &mut grad.whi),
        (&dpre_f, &p.wxf, &p.whf, &mut grad.wxf, &mut grad.whf),
        (&dpre_o, &p.wxo, &p.who, &mut grad.wxo, &mut grad.who),
        (&dpre_g, &p.wxc, &p.whc, &mut grad.wxc, &mut grad.whc),
    ] {
        gx.add_outer(d, &s.x);
        gh.add_outer(d, &s.h_prev);
        wx.tmul_vec_add(d, dx);
        wh.tmul_vec_add(d, &mut dh_prev);
    }
    (dh_prev, dc_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell() {
        let p = LstmParams::zeros(3, 2);
        let s = step(&p, &[0.3, -0.2], &[0.0; 3], &[0.0; 3]);
        assert_eq!(s.i, [0.5; 3]);
        assert_eq!(s.f, [0.5; 3]);
        assert_eq!(s.o, [0.5; 3]);
        assert_eq!(s.c, [0.0; 3]);
        assert_eq!(s.h, [0.0; 3]);
    }

    #[test]
    fn saturated_forget_gate_keeps_state() {
        let mut p = LstmParams::zeros(2, 1);
        p.bf.fill(20.0);
        let v = [0.7, -1.3];
        let (_, c) = lstm_cell_step(&p, &[0.0], &[0.0; 2], &v).unwrap();
        for k in 0..2 {
            assert!((c[k] - v[k]).abs() < 1e-8 * v[k].abs() + 1e-8);
        }
    }

    #[test]
    fn init_shapes() {
        let p = LstmParams::init(4, 3, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(p.bf.data, [1.0; 4]);
        assert!(p.wxi.data.iter().all(|v| v.abs() <= (1.0f64 / 3.0).sqrt()));
        assert!(lstm_cell_step(&p, &[0.0; 2], &[0.0; 4], &[0.0; 4]).is_err());
    }
}
