mod common;

use common::{gradient_check, inputs, random_params, scalar_cell};
use gadgetscan::blstm::{blstm_forward, lstm_cell_step, Arch, BlstmModel, Mode, Pooling};
use gadgetscan::linalg::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn cell_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (h, d) = (rng.gen_range(1..6), rng.gen_range(1..5));
        let p = random_params(h, d, &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let hp: Vec<f64> = (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cp: Vec<f64> = (0..h).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (h1, c1) = lstm_cell_step(&p, &x, &hp, &cp).unwrap();
        let (h2, c2) = scalar_cell(&p, &x, &hp, &cp);
        for k in 0..h {
            assert!((h1[k] - h2[k]).abs() <= 1e-12);
            assert!((c1[k] - c2[k]).abs() <= 1e-12);
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let arch = Arch::new(4, 2, 6, 3);
    let model = BlstmModel::init(arch, 21);
    let xs = inputs(3, 6, 3, 5);
    let refs: Vec<&Mat> = xs.iter().collect();
    let ys = [1, 0, 1];
    for mode in [Mode::Infer, Mode::Train { dropout: 0.5, seed: 8 }] {
        for (name, err) in gradient_check(&model, &refs, &ys, mode) {
            assert!(err < 1e-4, "{name}: relative error {err:e} in {mode:?}");
        }
    }
}

#[test]
fn gradients_with_max_pooling() {
    let arch = Arch { pooling: Pooling::Max, ..Arch::new(3, 1, 5, 2) };
    let model = BlstmModel::init(arch, 2);
    let xs = inputs(2, 5, 2, 6);
    let refs: Vec<&Mat> = xs.iter().collect();
    for (name, err) in gradient_check(&model, &refs, &[0, 1], Mode::Infer) {
        assert!(err < 1e-4, "{name}: relative error {err:e}");
    }
}

/// Swap the two directions of every layer. The halves of every layer output
/// trade places, so downstream input columns are permuted to match.
fn mirror(model: &BlstmModel) -> BlstmModel {
    let h = model.arch.hidden;
    let swap_cols = |m: &Mat| {
        let mut out = m.clone();
        for r in 0..m.rows {
            for c in 0..2 * h {
                out.set(r, (c + h) % (2 * h), m.get(r, c));
            }
        }
        out
    };
    let mut out = model.clone();
    for (l, pair) in out.layers.iter_mut().enumerate() {
        pair.swap(0, 1);
        if l > 0 {
            for p in pair.iter_mut() {
                for w in [&mut p.wxi, &mut p.wxf, &mut p.wxo, &mut p.wxc] {
                    *w = swap_cols(w);
                }
            }
        }
    }
    out.dense_w = swap_cols(&model.dense_w);
    out
}

fn reversed(m: &Mat) -> Mat {
    let mut out = m.clone();
    for t in 0..m.rows {
        out.row_mut(t).copy_from_slice(m.row(m.rows - 1 - t));
    }
    out
}

#[test]
fn direction_symmetry() {
    let model = BlstmModel::init(Arch::new(3, 3, 7, 2), 17);
    let xs = inputs(4, 7, 2, 3);
    let rev: Vec<Mat> = xs.iter().map(reversed).collect();
    let (p1, _) = blstm_forward(&model, &xs.iter().collect::<Vec<_>>(), Mode::Infer).unwrap();
    let (p2, _) = blstm_forward(&mirror(&model), &rev.iter().collect::<Vec<_>>(), Mode::Infer).unwrap();
    for (a, b) in p1.data.iter().zip(&p2.data) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn inverted_dropout_preserves_expectation() {
    let arch = Arch { dense: 3, ..Arch::new(3, 0, 4, 5) };
    // Positive weights and inputs keep every unit clear of cancellation.
    let mut model = BlstmModel::init(arch, 4);
    model.dense_w.data.iter_mut().for_each(|v| *v = v.abs());
    let mut x = inputs(1, 4, 5, 9).remove(0);
    x.data.iter_mut().for_each(|v| *v = v.abs());
    let (_, infer) = blstm_forward(&model, &[&x], Mode::Infer).unwrap();
    let runs = 10_000;
    let mut mean = vec![0.0; 3];
    for s in 0..runs {
        let (_, c) = blstm_forward(&model, &[&x], Mode::Train { dropout: 0.5, seed: s }).unwrap();
        for (m, v) in mean.iter_mut().zip(c.dense_pre.row(0)) {
            *m += v / runs as f64;
        }
    }
    // The bias is untouched by dropout; compare the masked part only.
    for k in 0..3 {
        let want = infer.dense_pre.get(0, k) - model.dense_b.data[k];
        let got = mean[k] - model.dense_b.data[k];
        assert!((got - want).abs() <= 0.02 * want.abs(), "unit {k}: {got} vs {want}");
    }
}
