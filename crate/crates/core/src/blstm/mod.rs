//! Bidirectional peephole-LSTM classifier trained with ADAMAX.

mod adamax;
mod cell;
mod network;
mod train;

pub use adamax::{adamax_step, AdamaxConfig, AdamaxState};
pub use cell::{lstm_cell_step, LstmParams, StepCache, TENSOR_NAMES};
pub use network::{blstm_backward, blstm_forward, cross_entropy, ForwardCache, Mode};
pub use train::{
    cross_validate, detect, predict, train, train_validated, CrossValidation, Detection, EpochStats, TrainConfig,
    TrainError, TrainReport,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::vectorizer::Vocabulary;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BlstmError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("not a model file")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("model file is truncated or corrupt")]
    Corrupt,
    #[error("model was trained with vocabulary {expected}, got {actual}")]
    ModelVocabMismatch { expected: String, actual: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pooling {
    /// Forward direction's last state and backward direction's first.
    Final,
    /// Element-wise maximum over time.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    /// Hidden units per direction.
    pub hidden: usize,
    pub layers: usize,
    pub tau: usize,
    pub dim: usize,
    pub dense: usize,
    pub pooling: Pooling,
}

impl Arch {
    pub fn new(hidden: usize, layers: usize, tau: usize, dim: usize) -> Self {
        Arch { hidden, layers, tau, dim, dense: hidden, pooling: Pooling::Final }
    }

    /// Width of the per-timestep output feeding the classification head.
    fn top_width(&self) -> usize {
        if self.layers == 0 {
            self.dim
        } else {
            2 * self.hidden
        }
    }

    pub fn feature_dim(&self) -> usize {
        match (self.pooling, self.layers) {
            (Pooling::Max, _) => self.top_width(),
            (Pooling::Final, 0) => 2 * self.dim,
            (Pooling::Final, _) => 2 * self.hidden,
        }
    }
}

impl Default for Arch {
    fn default() -> Self {
        Arch::new(300, 2, 50, 30)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlstmModel {
    pub arch: Arch,
    /// (forward, backward) parameters per layer.
    pub layers: Vec<[LstmParams; 2]>,
    pub dense_w: Mat,
    pub dense_b: Mat,
    pub out_w: Mat,
    pub out_b: Mat,
    pub vocab_hash: String,
}

const MAGIC: &[u8; 4] = b"VDPM";
const VERSION: u32 = 1;

impl BlstmModel {
    pub fn zeros(arch: Arch) -> Self {
        let layers = (0..arch.layers)
            .map(|l| {
                let input = if l == 0 { arch.dim } else { 2 * arch.hidden };
                [LstmParams::zeros(arch.hidden, input), LstmParams::zeros(arch.hidden, input)]
            })
            .collect();
        BlstmModel {
            arch,
            layers,
            dense_w: Mat::zeros(arch.dense, arch.feature_dim()),
            dense_b: Mat::zeros(arch.dense, 1),
            out_w: Mat::zeros(2, arch.dense),
            out_b: Mat::zeros(2, 1),
            vocab_hash: String::new(),
        }
    }

    pub fn init(arch: Arch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BlstmModel::zeros(arch);
        for (l, pair) in m.layers.iter_mut().enumerate() {
            let input = if l == 0 { arch.dim } else { 2 * arch.hidden };
            for p in pair.iter_mut() {
                *p = LstmParams::init(arch.hidden, input, &mut rng);
            }
        }
        let bd = (1.0 / arch.feature_dim() as f64).sqrt();
        m.dense_w = Mat::uniform(arch.dense, arch.feature_dim(), bd, &mut rng);
        let bo = (1.0 / arch.dense.max(1) as f64).sqrt();
        m.out_w = Mat::uniform(2, arch.dense, bo, &mut rng);
        m
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = BlstmModel::zeros(self.arch);
        z.vocab_hash = self.vocab_hash.clone();
        z
    }

    /// Layer by layer, forward then backward direction, each in
    /// `TENSOR_NAMES` order; then dense weight, dense bias, output weight,
    /// output bias.
    pub fn tensors(&self) -> Vec<&Mat> {
        let mut v: Vec<&Mat> = Vec::new();
        for pair in &self.layers {
            for p in pair {
                v.extend(p.tensors());
            }
        }
        v.extend([&self.dense_w, &self.dense_b, &self.out_w, &self.out_b]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut v: Vec<&mut Mat> = Vec::new();
        for pair in &mut self.layers {
            for p in pair {
                v.extend(p.tensors_mut());
            }
        }
        v.extend([&mut self.dense_w, &mut self.dense_b, &mut self.out_w, &mut self.out_b]);
        v
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for l in 0..self.layers.len() {
            for dir in ["fwd", "bwd"] {
                v.extend(TENSOR_NAMES.iter().map(|n| format!("layer{l}.{dir}.{n}")));
            }
        }
        v.extend(["dense.W", "dense.b", "out.W", "out.b"].map(String::from));
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let a = &self.arch;
        let pooling = match a.pooling {
            Pooling::Final => 0,
            Pooling::Max => 1,
        };
        for v in [VERSION, a.layers as u32, a.hidden as u32, a.dim as u32, a.tau as u32, a.dense as u32, pooling] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.vocab_hash.len() as u32).to_le_bytes());
        out.extend_from_slice(self.vocab_hash.as_bytes());
        for m in self.tensors() {
            out.extend_from_slice(&(m.rows as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols as u32).to_le_bytes());
            for v in &m.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BlstmError> {
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8], BlstmError> {
            let end = pos + n;
            if end > bytes.len() {
                return Err(BlstmError::Corrupt);
            }
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(BlstmError::BadMagic);
        }
        let mut u32s = [0u32; 7];
        for v in &mut u32s {
            *v = u32::from_le_bytes(take(4)?.try_into().unwrap());
        }
        let [version, layers, hidden, dim, tau, dense, pooling] = u32s;
        if version != VERSION {
            return Err(BlstmError::UnsupportedVersion(version));
        }
        let pooling = match pooling {
            0 => Pooling::Final,
            1 => Pooling::Max,
            _ => return Err(BlstmError::Corrupt),
        };
        if hidden == 0 || dim == 0 || tau == 0 || dense == 0 || layers > 64 {
            return Err(BlstmError::Corrupt);
        }
        let arch = Arch {
            hidden: hidden as usize,
            layers: layers as usize,
            tau: tau as usize,
            dim: dim as usize,
            dense: dense as usize,
            pooling,
        };
        let hash_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let vocab_hash = String::from_utf8(take(hash_len)?.to_vec()).map_err(|_| BlstmError::Corrupt)?;
        let mut model = BlstmModel::zeros(arch);
        model.vocab_hash = vocab_hash;
        for m in model.tensors_mut() {
            let rows = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let cols = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            if (rows, cols) != m.shape() {
                return Err(BlstmError::Corrupt);
            }
            for v in &mut m.data {
                *v = f64::from_le_bytes(take(8)?.try_into().unwrap());
            }
        }
        if pos != bytes.len() {
            return Err(BlstmError::Corrupt);
        }
        Ok(model)
    }

    /// Load and check that the model was trained against `vocab`.
    pub fn from_bytes_for(bytes: &[u8], vocab: &Vocabulary) -> Result<Self, BlstmError> {
        let m = BlstmModel::from_bytes(bytes)?;
        m.check_vocab(vocab)?;
        Ok(m)
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), BlstmError> {
        let actual = vocab.hash();
        if actual != self.vocab_hash {
            return Err(BlstmError::ModelVocabMismatch { expected: self.vocab_hash.clone(), actual });
        }
        if vocab.dim() != self.arch.dim {
            return Err(BlstmError::ShapeMismatch(format!(
                "model expects {}-dimensional embeddings, vocabulary has {}",
                self.arch.dim,
                vocab.dim()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persistence_round_trip() {
        let mut m = BlstmModel::init(Arch::new(3, 2, 5, 2), 9);
        m.vocab_hash = "abc".into();
        let bytes = m.to_bytes();
        assert_eq!(BlstmModel::from_bytes(&bytes).unwrap(), m);
        assert_eq!(BlstmModel::from_bytes(&bytes[..bytes.len() - 3]), Err(BlstmError::Corrupt));
        assert_eq!(BlstmModel::from_bytes(b"VDPV0000"), Err(BlstmError::BadMagic));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert_eq!(BlstmModel::from_bytes(&v2), Err(BlstmError::UnsupportedVersion(2)));
    }

    #[test]
    fn shapes() {
        let m = BlstmModel::zeros(Arch::new(4, 2, 6, 3));
        assert_eq!(m.layers[0][0].input(), 3);
        assert_eq!(m.layers[1][1].input(), 8);
        assert_eq!(m.dense_w.shape(), (4, 8));
        assert_eq!(m.tensors().len(), m.tensor_names().len());
    }
}
