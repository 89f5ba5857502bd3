//! Forward and backward passes of the full network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cell::{step, step_backward, LstmParams, StepCache};
use super::{BlstmError, BlstmModel, Pooling};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Inverted dropout with rate `dropout`; masks drawn from `seed`.
    Train { dropout: f64, seed: u64 },
    Infer,
}

struct LayerCache {
    fwd: Vec<StepCache>,
    bwd: Vec<StepCache>,
    /// Per-timestep dropout scale applied to this layer's output.
    mask: Option<Vec<Vec<f64>>>,
}

struct SeqCache {
    layers: Vec<LayerCache>,
    /// (timestep, column) of the top output feeding each feature element.
    sources: Vec<(usize, usize)>,
    feature: Vec<f64>,
    z: Vec<f64>,
}

pub struct ForwardCache {
    seqs: Vec<SeqCache>,
    /// batch × 2.
    pub probs: Mat,
    /// batch × dense width, before tanh.
    pub dense_pre: Mat,
}

fn dropout_mask(width: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..width).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
}

fn run_direction(p: &LstmParams, xs: &[Vec<f64>], reverse: bool) -> Vec<StepCache> {
    let n = p.hidden();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut steps = Vec::with_capacity(xs.len());
    for s in 0..xs.len() {
        let t = if reverse { xs.len() - 1 - s } else { s };
        let st = step(p, &xs[t], &h, &c);
        h.clone_from(&st.h);
        c.clone_from(&st.c);
        steps.push(st);
    }
    steps
}

fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

/// Run the network on τ × d inputs. Returns batch × 2 class probabilities.
pub fn blstm_forward(model: &BlstmModel, batch: &[&Mat], mode: Mode) -> Result<(Mat, ForwardCache), BlstmError> {
    let a = &model.arch;
    let mut rng = match mode {
        Mode::Train { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Mode::Infer => None,
    };
    let rate = match mode {
        Mode::Train { dropout, .. } => dropout,
        Mode::Infer => 0.0,
    };
    let mut probs = Mat::zeros(batch.len(), 2);
    let mut dense_pre = Mat::zeros(batch.len(), a.dense);
    let mut seqs = Vec::with_capacity(batch.len());
    for (b, x) in batch.iter().enumerate() {
        if x.shape() != (a.tau, a.dim) || a.tau == 0 {
            return Err(BlstmError::ShapeMismatch(format!(
                "input {b} is {}x{}, model expects {}x{}",
                x.rows, x.cols, a.tau, a.dim
            )));
        }
        let mut cur: Vec<Vec<f64>> = (0..a.tau).map(|t| x.row(t).to_vec()).collect();
        let mut layers = Vec::with_capacity(model.layers.len());
        for pair in &model.layers {
            let fwd = run_direction(&pair[0], &cur, false);
            let bwd = run_direction(&pair[1], &cur, true);
            let mut out: Vec<Vec<f64>> = (0..a.tau)
                .map(|t| {
                    let mut v = fwd[t].h.clone();
                    v.extend_from_slice(&bwd[a.tau - 1 - t].h);
                    v
                })
                .collect();
            let mask = match rng.as_mut() {
                Some(r) if rate > 0.0 => {
                    let m: Vec<Vec<f64>> = out.iter().map(|o| dropout_mask(o.len(), rate, r)).collect();
                    for (o, mk) in out.iter_mut().zip(&m) {
                        o.iter_mut().zip(mk).for_each(|(v, k)| *v *= k);
                    }
                    Some(m)
                }
                _ => None,
            };
            layers.push(LayerCache { fwd, bwd, mask });
            cur = out;
        }

        let width = cur[0].len();
        let sources: Vec<(usize, usize)> = match a.pooling {
            Pooling::Final if model.layers.is_empty() => {
                (0..width).map(|j| (a.tau - 1, j)).chain((0..width).map(|j| (0, j))).collect()
            }
            Pooling::Final => {
                let h = a.hidden;
                (0..h).map(|j| (a.tau - 1, j)).chain((h..2 * h).map(|j| (0, j))).collect()
            }
            Pooling::Max => (0..width)
                .map(|j| {
                    let t = (0..a.tau).fold(0, |best, t| if cur[t][j] > cur[best][j] { t } else { best });
                    (t, j)
                })
                .collect(),
        };
        let mut feature: Vec<f64> = sources.iter().map(|&(t, j)| cur[t][j]).collect();
        if model.layers.is_empty() {
            if let Some(r) = rng.as_mut().filter(|_| rate > 0.0) {
                let m = dropout_mask(feature.len(), rate, r);
                feature.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
            }
        }

        let pre = dense_pre.row_mut(b);
        pre.copy_from_slice(&model.dense_b.data);
        model.dense_w.mul_vec_add(&feature, pre);
        let z: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
        let mut logits = [model.out_b.data[0], model.out_b.data[1]];
        model.out_w.mul_vec_add(&z, &mut logits);
        let p = softmax2(logits);
        probs.row_mut(b).copy_from_slice(&p);
        seqs.push(SeqCache { layers, sources, feature, z });
    }
    let cache = ForwardCache { seqs, probs: probs.clone(), dense_pre };
    Ok((probs, cache))
}

/// Mean cross-entropy of class probabilities against labels.
pub fn cross_entropy(probs: &Mat, labels: &[usize]) -> f64 {
    let n = labels.len().max(1) as f64;
    labels.iter().enumerate().map(|(b, &y)| -probs.get(b, y).max(1e-300).ln()).sum::<f64>() / n
}

/// Gradients of the mean cross-entropy with respect to every parameter,
/// returned in a model-shaped container.
pub fn blstm_backward(model: &BlstmModel, cache: &ForwardCache, labels: &[usize]) -> BlstmModel {
    let a = &model.arch;
    let mut g = model.zeros_like();
    let scale = 1.0 / labels.len().max(1) as f64;
    for (b, (seq, &y)) in cache.seqs.iter().zip(labels).enumerate() {
        let mut dlogit = [cache.probs.get(b, 0) * scale, cache.probs.get(b, 1) * scale];
        dlogit[y] -= scale;
        g.out_w.add_outer(&dlogit, &seq.z);
        axpy_into(&mut g.out_b.data, &dlogit);
        let mut dz = vec![0.0; a.dense];
        model.out_w.tmul_vec_add(&dlogit, &mut dz);
        let da: Vec<f64> = dz.iter().zip(&seq.z).map(|(d, z)| d * (1.0 - z * z)).collect();
        g.dense_w.add_outer(&da, &seq.feature);
        axpy_into(&mut g.dense_b.data, &da);
        if model.layers.is_empty() {
            continue;
        }
        let mut dfeat = vec![0.0; seq.feature.len()];
        model.dense_w.tmul_vec_add(&da, &mut dfeat);

        let mut dout = vec![vec![0.0; 2 * a.hidden]; a.tau];
        for (k, &(t, j)) in seq.sources.iter().enumerate() {
            dout[t][j] += dfeat[k];
        }
        for l in (0..model.layers.len()).rev() {
            let lc = &seq.layers[l];
            if let Some(mask) = &lc.mask {
                for (d, m) in dout.iter_mut().zip(mask) {
                    d.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                }
            }
            let [pf, pb] = &model.layers[l];
            let input = pf.input();
            let mut din = vec![vec![0.0; input]; a.tau];
            let h = a.hidden;
            let [gf, gb] = &mut g.layers[l];
            let mut dh = vec![0.0; h];
            let mut dc = vec![0.0; h];
            for t in (0..a.tau).rev() {
                let total: Vec<f64> = dh.iter().zip(&dout[t][..h]).map(|(x, y)| x + y).collect();
                (dh, dc) = step_backward(pf, &lc.fwd[t], &total, &dc, gf, &mut din[t]);
            }
            dh.fill(0.0);
            dc.fill(0.0);
            for s in (0..a.tau).rev() {
                let t = a.tau - 1 - s;
                let total: Vec<f64> = dh.iter().zip(&dout[t][h..]).map(|(x, y)| x + y).collect();
                (dh, dc) = step_backward(pb, &lc.bwd[s], &total, &dc, gb, &mut din[t]);
            }
            dout = din;
        }
    }
    g
}

fn axpy_into(y: &mut [f64], x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blstm::Arch;

    fn input(tau: usize, d: usize, seed: u64) -> Mat {
        Mat::uniform(tau, d, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = BlstmModel::zeros(Arch::new(3, 2, 4, 2));
        let x = input(4, 2, 1);
        let (p, _) = blstm_forward(&m, &[&x], Mode::Infer).unwrap();
        assert_eq!(p.row(0), [0.5, 0.5]);
    }

    #[test]
    fn rows_sum_to_one() {
        let m = BlstmModel::init(Arch::new(5, 2, 7, 3), 4);
        let xs: Vec<Mat> = (0..6).map(|s| input(7, 3, s)).collect();
        let refs: Vec<&Mat> = xs.iter().collect();
        let (p, _) = blstm_forward(&m, &refs, Mode::Infer).unwrap();
        for b in 0..6 {
            assert!((p.get(b, 0) + p.get(b, 1) - 1.0).abs() < 1e-12);
            assert!(p.row(b).iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn identical_inputs_identical_outputs() {
        let m = BlstmModel::init(Arch::new(4, 1, 5, 2), 2);
        let x = input(5, 2, 9);
        let (p, _) = blstm_forward(&m, &[&x, &x], Mode::Infer).unwrap();
        assert_eq!(p.row(0), p.row(1));
    }

    #[test]
    fn wrong_shape() {
        let m = BlstmModel::zeros(Arch::new(2, 1, 5, 2));
        assert!(matches!(blstm_forward(&m, &[&input(4, 2, 0)], Mode::Infer), Err(BlstmError::ShapeMismatch(_))));
    }

    #[test]
    fn zero_input_gives_no_input_weight_gradient() {
        let m = BlstmModel::init(Arch::new(3, 1, 4, 2), 5);
        let x = Mat::zeros(4, 2);
        let (_, c) = blstm_forward(&m, &[&x], Mode::Infer).unwrap();
        let g = blstm_backward(&m, &c, &[1]);
        for p in &g.layers[0] {
            for w in [&p.wxi, &p.wxf, &p.wxo, &p.wxc] {
                assert!(w.data.iter().all(|&v| v == 0.0));
            }
        }
    }
}
