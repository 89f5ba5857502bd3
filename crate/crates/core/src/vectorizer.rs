//! Token vocabulary, skip-gram embeddings and fixed-length gadget encoding.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gadget::{GadgetDirection, Label};
use crate::linalg::{axpy, dot, sigmoid, Mat};
use crate::symbolizer::SymbolicGadget;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

const MAGIC: &[u8; 4] = b"VDPV";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum VectorError {
    #[error("cannot train embeddings on an empty corpus")]
    EmptyCorpus,
    #[error("embedding dimension must be at least 1")]
    ZeroDimension,
    #[error("not a vocabulary file")]
    BadMagic,
    #[error("unsupported vocabulary file version {0}")]
    UnsupportedVersion(u32),
    #[error("vocabulary file is truncated or corrupt")]
    Corrupt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negative: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig { dim: 30, window: 5, negative: 5, epochs: 5, learning_rate: 0.025, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    embeddings: Mat,
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, embeddings: Mat) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index, embeddings }
    }

    /// Entries including the two specials.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.get(token).is_some_and(|&i| i > UNK)
    }

    pub fn embedding(&self, index: usize) -> &[f64] {
        self.embeddings.row(index)
    }

    pub fn embedding_of(&self, token: &str) -> &[f64] {
        self.embedding(self.index_of(token))
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        let (x, y) = (self.embedding_of(a), self.embedding_of(b));
        dot(x, y) / (dot(x, x).sqrt() * dot(y, y).sqrt()).max(1e-300)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tokens.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for t in &self.tokens {
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            out.extend_from_slice(t.as_bytes());
        }
        for v in &self.embeddings.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VectorError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(VectorError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(VectorError::UnsupportedVersion(version));
        }
        let n = r.u32()? as usize;
        let d = r.u32()? as usize;
        if n < 2 || d == 0 {
            return Err(VectorError::Corrupt);
        }
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(len)?).map_err(|_| VectorError::Corrupt)?;
            tokens.push(s.to_string());
        }
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        if r.pos != bytes.len() || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(VectorError::Corrupt);
        }
        Ok(Vocabulary::from_parts(tokens, Mat::from_vec(n, d, data)))
    }

    /// Content hash, used to pair models with the vocabulary they were trained on.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VectorError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(VectorError::Corrupt)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, VectorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Skip-gram with negative sampling over token sequences. Token indices are
/// assigned by descending frequency, ties by text, after the specials.
pub fn train_embeddings(corpus: &[Vec<String>], cfg: &EmbeddingConfig) -> Result<Vocabulary, VectorError> {
    if cfg.dim == 0 {
        return Err(VectorError::ZeroDimension);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for sentence in corpus {
        for t in sentence {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(VectorError::EmptyCorpus);
    }
    let mut by_freq: Vec<(&str, usize)> = counts.into_iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(by_freq.iter().map(|(t, _)| t.to_string()));
    let index: HashMap<&str, usize> = tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();

    let n = tokens.len();
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut syn0 = Mat::zeros(n, d);
    for r in 2..n {
        for v in syn0.row_mut(r) {
            *v = (rng.gen::<f64>() - 0.5) / d as f64;
        }
    }
    let mut syn1 = Mat::zeros(n, d);
    let noise = WeightedIndex::new(by_freq.iter().map(|(_, c)| (*c as f64).powf(0.75))).unwrap();

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().map(|t| index[t.as_str()]).collect())
        .collect();
    let total = (cfg.epochs * sentences.iter().map(Vec::len).sum::<usize>()).max(1) as f64;
    let mut seen = 0usize;
    let mut grad = vec![0.0; d];
    for _ in 0..cfg.epochs {
        for sent in &sentences {
            for (i, &word) in sent.iter().enumerate() {
                let alpha = cfg.learning_rate * (1.0 - seen as f64 / total).max(1e-4);
                seen += 1;
                let reach = if cfg.window == 0 { 0 } else { cfg.window - rng.gen_range(0..cfg.window) };
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(sent.len() - 1);
                for (j, &ctx) in sent.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    grad.fill(0.0);
                    for k in 0..=cfg.negative {
                        let (target, label) = if k == 0 {
                            (word, 1.0)
                        } else {
                            let t = noise.sample(&mut rng) + 2;
                            if t == word {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let f = dot(syn0.row(ctx), syn1.row(target));
                        let g = (label - sigmoid(f)) * alpha;
                        axpy(g, syn1.row(target), &mut grad);
                        let src = syn0.row(ctx).to_vec();
                        axpy(g, &src, syn1.row_mut(target));
                    }
                    axpy(1.0, &grad, syn0.row_mut(ctx));
                }
            }
        }
    }
    let mut mean = vec![0.0; d];
    for r in 2..n {
        axpy(1.0 / (n - 2) as f64, syn0.row(r), &mut mean);
    }
    syn0.row_mut(UNK).copy_from_slice(&mean);
    Ok(Vocabulary::from_parts(tokens, syn0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetVector {
    pub gadget_id: String,
    /// τ × d.
    pub matrix: Mat,
    /// Vocabulary index per row, `PAD` for padding.
    pub indices: Vec<usize>,
    pub label: Label,
    pub direction: GadgetDirection,
}

impl GadgetVector {
    pub fn tau(&self) -> usize {
        self.matrix.rows
    }
}

/// Fit a token sequence into τ positions. Backward gadgets end at the key
/// call, so they lose or gain positions at the front; forward ones at the back.
pub fn fit_indices(indices: &[usize], direction: GadgetDirection, tau: usize) -> Vec<usize> {
    let n = indices.len();
    if n >= tau {
        return if direction.is_backward() { indices[n - tau..].to_vec() } else { indices[..tau].to_vec() };
    }
    let pad = std::iter::repeat_n(PAD, tau - n);
    if direction.is_backward() {
        pad.chain(indices.iter().copied()).collect()
    } else {
        indices.iter().copied().chain(pad).collect()
    }
}

pub fn encode_tokens<S: AsRef<str>>(tokens: &[S], direction: GadgetDirection, vocab: &Vocabulary, tau: usize) -> (Vec<usize>, Mat) {
    let raw: Vec<usize> = tokens.iter().map(|t| vocab.index_of(t.as_ref())).collect();
    let indices = fit_indices(&raw, direction, tau);
    let mut m = Mat::zeros(tau, vocab.dim());
    for (r, &i) in indices.iter().enumerate() {
        m.row_mut(r).copy_from_slice(vocab.embedding(i));
    }
    (indices, m)
}

pub fn encode(gadget: &SymbolicGadget, vocab: &Vocabulary, tau: usize) -> GadgetVector {
    let texts = gadget.texts();
    let (indices, matrix) = encode_tokens(&texts, gadget.direction, vocab, tau);
    GadgetVector { gadget_id: gadget.gadget_id.clone(), matrix, indices, label: gadget.label, direction: gadget.direction }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(sents: &[&str]) -> Vec<Vec<String>> {
        sents.iter().map(|s| s.split_whitespace().map(str::to_string).collect()).collect()
    }

    #[test]
    fn co_occurring_tokens_are_closer() {
        let mut sents = Vec::new();
        for _ in 0..60 {
            sents.push("a b a b a b a b");
            sents.push("z y z y z y z y");
        }
        let v = train_embeddings(&corpus(&sents), &EmbeddingConfig::default()).unwrap();
        assert!(v.cosine("a", "b") > v.cosine("a", "z"));
    }

    #[test]
    fn single_token_corpus() {
        let cfg = EmbeddingConfig { dim: 1, ..Default::default() };
        let v = train_embeddings(&corpus(&["x"]), &cfg).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.embedding_of("x")[0].is_finite());
        assert_eq!(v.embedding(PAD), [0.0]);
    }

    #[test]
    fn deterministic_and_round_trips() {
        let c = corpus(&["strcpy ( VAR1 , VAR2 ) ;", "VAR1 = 0 ;"]);
        let a = train_embeddings(&c, &EmbeddingConfig::default()).unwrap();
        let b = train_embeddings(&c, &EmbeddingConfig::default()).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(Vocabulary::from_bytes(&a.to_bytes()).unwrap(), a);
        assert_eq!(a.index_of("never-seen"), UNK);
        assert_eq!(&a.tokens()[2..4], [";", "VAR1"]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(train_embeddings(&[], &EmbeddingConfig::default()), Err(VectorError::EmptyCorpus)));
        assert!(matches!(train_embeddings(&[vec![]], &EmbeddingConfig::default()), Err(VectorError::EmptyCorpus)));
        assert!(matches!(Vocabulary::from_bytes(b"nope"), Err(VectorError::BadMagic)));
        let v = train_embeddings(&corpus(&["a b"]), &EmbeddingConfig::default()).unwrap();
        let bytes = v.to_bytes();
        assert!(matches!(Vocabulary::from_bytes(&bytes[..bytes.len() - 1]), Err(VectorError::Corrupt)));
    }

    #[test]
    fn unk_is_mean() {
        let v = train_embeddings(&corpus(&["a b c"]), &EmbeddingConfig { dim: 4, ..Default::default() }).unwrap();
        for k in 0..4 {
            let mean = (2..5).map(|i| v.embedding(i)[k]).sum::<f64>() / 3.0;
            assert!((v.embedding(UNK)[k] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn fitting() {
        let idx: Vec<usize> = (10..50).collect();
        let b = fit_indices(&idx, GadgetDirection::Backward, 50);
        assert!(b[..10].iter().all(|&i| i == PAD));
        assert_eq!(&b[10..], &idx[..]);
        let long: Vec<usize> = (0..60).collect();
        assert_eq!(fit_indices(&long, GadgetDirection::Forward, 50), (0..50).collect::<Vec<_>>());
        assert_eq!(fit_indices(&long, GadgetDirection::MixedBackward, 50), (10..60).collect::<Vec<_>>());
        assert_eq!(fit_indices(&long[..50], GadgetDirection::Forward, 50), long[..50]);
    }
}
