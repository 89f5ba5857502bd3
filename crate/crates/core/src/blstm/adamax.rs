//! ADAMAX: bias-corrected first moment, infinity-norm second moment.

use serde::{Deserialize, Serialize};

use super::BlstmModel;
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamaxConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamaxConfig {
    fn default() -> Self {
        AdamaxConfig { learning_rate: 0.002, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// One element-wise update at step `t` (1-based).
pub fn adamax_step(theta: &mut [f64], grad: &[f64], m: &mut [f64], u: &mut [f64], t: u64, cfg: &AdamaxConfig) {
    let lr_t = cfg.learning_rate / (1.0 - cfg.beta1.powi(t as i32));
    for k in 0..theta.len() {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
        u[k] = (cfg.beta2 * u[k]).max(grad[k].abs());
        theta[k] -= lr_t * m[k] / (u[k] + cfg.epsilon);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamaxState {
    pub m: Vec<Mat>,
    pub u: Vec<Mat>,
    pub t: u64,
}

impl AdamaxState {
    pub fn new(model: &BlstmModel) -> Self {
        let zeros: Vec<Mat> = model.tensors().iter().map(|m| Mat::zeros(m.rows, m.cols)).collect();
        AdamaxState { m: zeros.clone(), u: zeros, t: 0 }
    }

    pub fn update(&mut self, model: &mut BlstmModel, grads: &BlstmModel, cfg: &AdamaxConfig) {
        self.t += 1;
        for (((p, g), m), u) in model.tensors_mut().into_iter().zip(grads.tensors()).zip(&mut self.m).zip(&mut self.u) {
            adamax_step(&mut p.data, &g.data, &mut m.data, &mut u.data, self.t, cfg);
        }
    }
}
