//! Confusion counts, detection metrics, program-level splits and k-fold
//! partitions.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    /// Accumulate (truth, predicted) class pairs, 1 meaning vulnerable.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut c = ConfusionCounts::default();
        for (truth, pred) in pairs {
            c.add(truth == 1, pred == 1);
        }
        c
    }

    pub fn add(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

/// Rates in [0, 1]; `None` when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub tpr: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn f1_score(precision: f64, tpr: f64) -> Option<f64> {
    let s = precision + tpr;
    (s > 0.0).then(|| 2.0 * precision * tpr / s)
}

pub fn compute_metrics(c: &ConfusionCounts) -> MetricReport {
    let tpr = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    MetricReport {
        fpr: ratio(c.fp, c.fp + c.tn),
        fnr: ratio(c.fn_, c.tp + c.fn_),
        tpr,
        precision,
        f1: precision.zip(tpr).and_then(|(p, r)| f1_score(p, r)),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "undef".to_string(), |v| format!("{:.1}", 100.0 * v))
}

fn pct_sign(v: Option<f64>) -> String {
    v.map_or_else(|| "undef".to_string(), |v| format!("{:.1}%", 100.0 * v))
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FPR {}  FNR {}  TPR {}  P {}  F1 {}",
            pct_sign(self.fpr),
            pct_sign(self.fnr),
            pct_sign(self.tpr),
            pct_sign(self.precision),
            pct_sign(self.f1)
        )
    }
}

/// One row of a human-readable metrics table.
pub fn table_row(name: &str, c: &ConfusionCounts) -> String {
    let m = compute_metrics(c);
    format!(
        "{:<16} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7}",
        name,
        c.tp,
        c.fp,
        c.fn_,
        c.tn,
        pct(m.fpr),
        pct(m.fnr),
        pct(m.tpr),
        pct(m.precision),
        pct(m.f1)
    )
}

pub fn table_header() -> String {
    format!(
        "{:<16} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "dataset", "TP", "FP", "FN", "TN", "FPR%", "FNR%", "TPR%", "P%", "F1%"
    )
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("need at least 2 programs to split, got {0}")]
    TooFewPrograms(usize),
    #[error("need at least {k} samples for {k} folds, got {n}")]
    TooFewSamples { n: usize, k: usize },
}

/// Seeded program-level split: ⌈ratio·n⌉ training programs, the rest target.
/// Both sides keep at least one program.
pub fn split_programs<T: Clone>(programs: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), SplitError> {
    let n = programs.len();
    if n < 2 {
        return Err(SplitError::TooFewPrograms(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * n as f64) - 1e-9).ceil().clamp(1.0, (n - 1) as f64) as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| programs[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// (training indices, validation indices).
pub type Fold = (Vec<usize>, Vec<usize>);

/// `k` disjoint validation folds covering `0..n`, sizes differing by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>, SplitError> {
    if k == 0 || n < k {
        return Err(SplitError::TooFewSamples { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let val: BTreeSet<usize> = order[start..start + size].iter().copied().collect();
        let train = (0..n).filter(|i| !val.contains(i)).collect();
        folds.push((train, val.into_iter().collect()));
        start += size;
    }
    Ok(folds)
}
