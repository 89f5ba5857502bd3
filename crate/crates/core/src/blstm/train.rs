//! Minibatch training, k-fold cross-validation and detection.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adamax::{AdamaxConfig, AdamaxState};
use super::network::{blstm_backward, blstm_forward, cross_entropy, Mode};
use super::{Arch, BlstmError, BlstmModel};
use crate::evalkit::{kfold, ConfusionCounts, SplitError};
use crate::gadget::CodeGadget;
use crate::linalg::Mat;
use crate::symbolizer::Symbolizer;
use crate::vectorizer::{encode, GadgetVector, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Rescale gradients whose global L2 norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 4,
            dropout: 0.5,
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 1,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    fn adamax(&self) -> AdamaxConfig {
        AdamaxConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDatabase,
    #[error("gadget {0} has no label")]
    Unlabeled(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] BlstmError),
    #[error(transparent)]
    Split(#[from] SplitError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub validation: Option<ConfusionCounts>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub warnings: Vec<String>,
}

fn labels_of(samples: &[GadgetVector]) -> Result<Vec<usize>, TrainError> {
    samples
        .iter()
        .map(|s| s.label.class().ok_or_else(|| TrainError::Unlabeled(s.gadget_id.clone())))
        .collect()
}

pub fn train(
    samples: &[GadgetVector],
    vocab_hash: &str,
    cfg: &TrainConfig,
    arch: Arch,
) -> Result<(BlstmModel, TrainReport), TrainError> {
    train_validated(samples, &[], vocab_hash, cfg, arch)
}

/// Train, scoring `validation` after every epoch when it is non-empty.
pub fn train_validated(
    samples: &[GadgetVector],
    validation: &[GadgetVector],
    vocab_hash: &str,
    cfg: &TrainConfig,
    arch: Arch,
) -> Result<(BlstmModel, TrainReport), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDatabase);
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.dropout) {
        return Err(TrainError::Config(format!("batch size {} dropout {}", cfg.batch_size, cfg.dropout)));
    }
    let labels = labels_of(samples)?;
    let val_labels = labels_of(validation)?;
    let mut report = TrainReport::default();
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        let w = format!("training set has a single class ({} samples)", labels.len());
        log::warn!("{w}");
        report.warnings.push(w);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = BlstmModel::init(arch, rng.gen());
    model.vocab_hash = vocab_hash.to_string();
    let mut opt = AdamaxState::new(&model);
    let adamax = cfg.adamax();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<&Mat> = chunk.iter().map(|&i| &samples[i].matrix).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (probs, cache) = blstm_forward(&model, &xs, Mode::Train { dropout: cfg.dropout, seed: rng.gen() })?;
            loss_sum += cross_entropy(&probs, &ys) * chunk.len() as f64;
            let mut grads = blstm_backward(&model, &cache, &ys);
            if let Some(limit) = cfg.clip_norm {
                let norm = grads.tensors().iter().map(|m| m.sum_squares()).sum::<f64>().sqrt();
                if norm > limit {
                    grads.tensors_mut().into_iter().for_each(|m| m.scale(limit / norm));
                }
            }
            opt.update(&mut model, &grads, &adamax);
        }
        let validation = (!validation.is_empty()).then(|| {
            let preds = predict(&model, validation).unwrap_or_default();
            ConfusionCounts::from_pairs(val_labels.iter().copied().zip(preds.iter().map(|p| p.0)))
        });
        let loss = loss_sum / samples.len() as f64;
        log::info!("epoch {epoch}: loss {loss:.4}");
        report.epochs.push(EpochStats { epoch, loss, validation });
    }
    Ok((model, report))
}

/// (class, probability of class 1) per sample. Exact ties go to class 0.
pub fn predict(model: &BlstmModel, samples: &[GadgetVector]) -> Result<Vec<(usize, f64)>, BlstmError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(256) {
        let xs: Vec<&Mat> = chunk.iter().map(|s| &s.matrix).collect();
        let (p, _) = blstm_forward(model, &xs, Mode::Infer)?;
        for b in 0..chunk.len() {
            let p1 = p.get(b, 1);
            out.push((usize::from(p1 > 0.5), p1));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<ConfusionCounts>,
    pub total: ConfusionCounts,
    /// Retrained on every sample.
    pub model: BlstmModel,
    pub report: TrainReport,
}

pub fn cross_validate(
    samples: &[GadgetVector],
    k: usize,
    vocab_hash: &str,
    cfg: &TrainConfig,
    arch: Arch,
) -> Result<CrossValidation, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDatabase);
    }
    let mut folds = Vec::with_capacity(k);
    let mut total = ConfusionCounts::default();
    for (f, (tr, va)) in kfold(samples.len(), k, cfg.seed)?.into_iter().enumerate() {
        let train_set: Vec<GadgetVector> = tr.iter().map(|&i| samples[i].clone()).collect();
        let val_set: Vec<GadgetVector> = va.iter().map(|&i| samples[i].clone()).collect();
        let fold_cfg = TrainConfig { seed: cfg.seed.wrapping_add(f as u64 + 1), ..*cfg };
        let (model, _) = train(&train_set, vocab_hash, &fold_cfg, arch)?;
        let preds = predict(&model, &val_set)?;
        let c = ConfusionCounts::from_pairs(labels_of(&val_set)?.into_iter().zip(preds.iter().map(|p| p.0)));
        total.merge(&c);
        folds.push(c);
    }
    let (model, report) = train(samples, vocab_hash, cfg, arch)?;
    Ok(CrossValidation { folds, total, model, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub gadget_id: String,
    pub program: String,
    pub callee: String,
    pub class: usize,
    pub probability: f64,
    pub locations: Vec<(String, u32)>,
}

/// Classify gadgets, most suspicious first.
pub fn detect(
    model: &BlstmModel,
    vocab: &Vocabulary,
    gadgets: &[CodeGadget],
    symbolizer: &Symbolizer,
) -> Result<Vec<Detection>, BlstmError> {
    model.check_vocab(vocab)?;
    let vectors: Vec<GadgetVector> =
        gadgets.iter().map(|g| encode(&symbolizer.symbolize(g), vocab, model.arch.tau)).collect();
    let preds = predict(model, &vectors)?;
    let mut out: Vec<Detection> = gadgets
        .iter()
        .zip(preds)
        .map(|(g, (class, probability))| Detection {
            gadget_id: g.id.clone(),
            program: g.program.clone(),
            callee: g.callee.clone(),
            class,
            probability,
            locations: g.locations(),
        })
        .collect();
    out.sort_by(|a, b| b.probability.total_cmp(&a.probability).then_with(|| a.gadget_id.cmp(&b.gadget_id)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gadget::{GadgetDirection, Label};

    fn sample(id: usize, label: Label, seed: u64, tau: usize, d: usize) -> GadgetVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mat::uniform(tau, d, 0.1, &mut rng);
        let sign = if label == Label::Vulnerable { 1.0 } else { -1.0 };
        for t in 0..tau {
            m.set(t, 0, sign);
        }
        GadgetVector {
            gadget_id: format!("g{id}"),
            matrix: m,
            indices: vec![2; tau],
            label,
            direction: GadgetDirection::Backward,
        }
    }

    fn toy(n: usize) -> Vec<GadgetVector> {
        (0..n)
            .map(|i| sample(i, if i % 2 == 0 { Label::Vulnerable } else { Label::NotVulnerable }, i as u64, 5, 3))
            .collect()
    }

    #[test]
    fn descent_on_separable_pair() {
        let data = toy(2);
        let arch = Arch::new(4, 1, 5, 3);
        let mut model = BlstmModel::init(arch, 3);
        let mut opt = AdamaxState::new(&model);
        let cfg = AdamaxConfig { learning_rate: 1e-2, ..Default::default() };
        let xs: Vec<&Mat> = data.iter().map(|s| &s.matrix).collect();
        let ys = [1, 0];
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            let (p, cache) = blstm_forward(&model, &xs, Mode::Infer).unwrap();
            let loss = cross_entropy(&p, &ys);
            assert!(loss < last, "loss rose from {last} to {loss}");
            last = loss;
            let g = blstm_backward(&model, &cache, &ys);
            opt.update(&mut model, &g, &cfg);
        }
    }

    #[test]
    fn deterministic_training() {
        let data = toy(20);
        let cfg = TrainConfig { batch_size: 8, epochs: 2, ..Default::default() };
        let arch = Arch::new(3, 1, 5, 3);
        let (a, _) = train(&data, "h", &cfg, arch).unwrap();
        let (b, _) = train(&data, "h", &cfg, arch).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn rejects_empty_and_unlabeled() {
        let arch = Arch::new(2, 1, 5, 3);
        assert_eq!(train(&[], "", &TrainConfig::default(), arch).unwrap_err(), TrainError::EmptyDatabase);
        let mut d = toy(2);
        d[1].label = Label::Unlabeled;
        assert!(matches!(train(&d, "", &TrainConfig::default(), arch), Err(TrainError::Unlabeled(_))));
    }

    #[test]
    fn single_class_warns() {
        let d: Vec<_> = (0..4).map(|i| sample(i, Label::Vulnerable, i as u64, 5, 3)).collect();
        let cfg = TrainConfig { epochs: 1, ..Default::default() };
        let (_, r) = train(&d, "", &cfg, Arch::new(2, 1, 5, 3)).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn zero_model_ties_to_class_zero() {
        let m = BlstmModel::zeros(Arch::new(2, 1, 5, 3));
        let p = predict(&m, &toy(3)).unwrap();
        assert!(p.iter().all(|&(c, prob)| c == 0 && prob == 0.5));
        assert!(predict(&m, &[]).unwrap().is_empty());
    }

    #[test]
    fn cross_validation_folds() {
        let cfg = TrainConfig { batch_size: 4, epochs: 1, ..Default::default() };
        let cv = cross_validate(&toy(12), 3, "", &cfg, Arch::new(2, 1, 5, 3)).unwrap();
        assert_eq!(cv.folds.len(), 3);
        assert_eq!(cv.total.total(), 12);
    }
}
