//! Oracles shared by the BLSTM tests and the acceptance suite.

#![allow(dead_code)]

use gadgetscan::blstm::{blstm_backward, blstm_forward, cross_entropy, BlstmModel, LstmParams, Mode};
use gadgetscan::linalg::Mat;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rand_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::uniform(rows, cols, 1.0, rng)
}

pub fn random_params(h: usize, d: usize, rng: &mut ChaCha8Rng) -> LstmParams {
    let mut p = LstmParams::zeros(h, d);
    for m in p.tensors_mut() {
        *m = rand_mat(m.rows, m.cols, rng);
    }
    p
}

/// The cell equations written out with explicit index loops.
pub fn scalar_cell(p: &LstmParams, x: &[f64], hp: &[f64], cp: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = hp.len();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut hs = vec![0.0; h];
    let mut cs = vec![0.0; h];
    for k in 0..h {
        let mut zf = p.bf.get(k, 0) + p.wcf.get(k, 0) * cp[k];
        let mut zi = p.bi.get(k, 0) + p.wci.get(k, 0) * cp[k];
        let mut zc = p.bc.get(k, 0);
        let mut zo = p.bo.get(k, 0);
        for j in 0..x.len() {
            zf += p.wxf.get(k, j) * x[j];
            zi += p.wxi.get(k, j) * x[j];
            zc += p.wxc.get(k, j) * x[j];
            zo += p.wxo.get(k, j) * x[j];
        }
        for j in 0..h {
            zf += p.whf.get(k, j) * hp[j];
            zi += p.whi.get(k, j) * hp[j];
            zc += p.whc.get(k, j) * hp[j];
            zo += p.who.get(k, j) * hp[j];
        }
        let f = sig(zf);
        let i = sig(zi);
        cs[k] = f * cp[k] + i * zc.tanh();
        let o = sig(zo + p.wco.get(k, 0) * cs[k]);
        hs[k] = o * cs[k].tanh();
    }
    (hs, cs)
}

pub fn loss(model: &BlstmModel, xs: &[&Mat], ys: &[usize], mode: Mode) -> f64 {
    let (p, _) = blstm_forward(model, xs, mode).unwrap();
    cross_entropy(&p, ys)
}

/// Largest relative error between analytic and central-difference gradients
/// over each tensor.
pub fn gradient_check(model: &BlstmModel, xs: &[&Mat], ys: &[usize], mode: Mode) -> Vec<(String, f64)> {
    let (_, cache) = blstm_forward(model, xs, mode).unwrap();
    let analytic = blstm_backward(model, &cache, ys);
    let names = model.tensor_names();
    let eps = 1e-5;
    let mut worst = Vec::new();
    let n_tensors = model.tensors().len();
    for ti in 0..n_tensors {
        let mut err: f64 = 0.0;
        for k in 0..model.tensors()[ti].len() {
            let mut plus = model.clone();
            plus.tensors_mut()[ti].data[k] += eps;
            let mut minus = model.clone();
            minus.tensors_mut()[ti].data[k] -= eps;
            let numeric = (loss(&plus, xs, ys, mode) - loss(&minus, xs, ys, mode)) / (2.0 * eps);
            let a = analytic.tensors()[ti].data[k];
            err = err.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
        worst.push((names[ti].clone(), err));
    }
    worst
}

pub fn inputs(n: usize, tau: usize, d: usize, seed: u64) -> Vec<Mat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rand_mat(tau, d, &mut rng)).collect()
}

