use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use gadgetscan::blstm::{Arch, Pooling, TrainConfig};
use gadgetscan::calltable::{CallTable, TableMode};
use gadgetscan::vectorizer::EmbeddingConfig;
use serde::Deserialize;

/// Pipeline settings shared by all subcommands. Each may also be set in the
/// TOML file given by `--config`; command-line values win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PipelineOptions {
    /// Call table file (`name<TAB>F|B` per line), used instead of the bundled tables.
    #[arg(long, global = true)]
    pub call_table: Option<PathBuf>,
    /// Bundled call table: ALL, SEL-CWE119, SEL-CWE399 or SEL-HYBRID.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Token positions per gadget.
    #[arg(long, global = true)]
    pub tau: Option<usize>,
    #[arg(long, global = true)]
    pub embedding_dim: Option<usize>,
    #[arg(long, global = true)]
    pub embedding_epochs: Option<usize>,
    /// Hidden units per direction.
    #[arg(long, global = true)]
    pub hidden: Option<usize>,
    #[arg(long, global = true)]
    pub layers: Option<usize>,
    #[arg(long, global = true)]
    pub dense: Option<usize>,
    /// Sequence feature: final or max.
    #[arg(long, global = true)]
    pub pooling: Option<String>,
    #[arg(long, global = true)]
    pub dropout: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    /// Global gradient-norm limit; 0 disables clipping.
    #[arg(long, global = true)]
    pub clip_norm: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Corpus directory: each subdirectory is a program, each top-level file its own program.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Label manifest (`program<TAB>good|bad|mixed|diff<TAB>payload`).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    pub db: Option<PathBuf>,
    #[arg(long, global = true)]
    pub vocab: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Line-delimited JSON report output.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

macro_rules! overlay {
    ($cli:expr, $file:expr, $($field:ident),*) => {
        PipelineOptions { $($field: $cli.$field.or($file.$field)),* }
    };
}

impl PipelineOptions {
    /// Fill unset fields from `file`.
    pub fn or(self, file: PipelineOptions) -> PipelineOptions {
        overlay!(
            self, file, call_table, mode, tau, embedding_dim, embedding_epochs, hidden, layers, dense, pooling,
            dropout, batch_size, epochs, learning_rate, clip_norm, seed, corpus, manifest, db, vocab, model, report
        )
    }

    pub fn load(path: &Path) -> Result<PipelineOptions> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut opts: PipelineOptions =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut opts.call_table,
            &mut opts.corpus,
            &mut opts.manifest,
            &mut opts.db,
            &mut opts.vocab,
            &mut opts.model,
            &mut opts.report,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(opts)
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub call_table: Option<PathBuf>,
    pub mode: TableMode,
    pub tau: usize,
    pub embedding: EmbeddingConfig,
    pub hidden: usize,
    pub layers: usize,
    pub dense: Option<usize>,
    pub pooling: Pooling,
    pub train: TrainConfig,
    pub corpus: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub db: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

fn in_range<T: PartialOrd + std::fmt::Display>(name: &str, v: T, lo: T, hi: T) -> Result<T> {
    if v < lo || v > hi {
        bail!("{name} = {v} is outside [{lo}, {hi}]");
    }
    Ok(v)
}

impl PipelineConfig {
    pub fn resolve(o: PipelineOptions) -> Result<PipelineConfig> {
        let mode = match &o.mode {
            Some(m) => m.parse().map_err(|e| anyhow::anyhow!("{e}"))?,
            None => TableMode::SelHybrid,
        };
        let pooling = match o.pooling.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("final") => Pooling::Final,
            Some("max") => Pooling::Max,
            Some(p) => bail!("unknown pooling {p:?} (expected final or max)"),
        };
        let defaults = TrainConfig::default();
        let emb = EmbeddingConfig::default();
        let seed = o.seed.unwrap_or(defaults.seed);
        let dropout = o.dropout.unwrap_or(defaults.dropout);
        if !(0.0..1.0).contains(&dropout) {
            bail!("dropout = {dropout} is outside [0, 1)");
        }
        let learning_rate = o.learning_rate.unwrap_or(defaults.learning_rate);
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            bail!("learning-rate = {learning_rate} must be positive");
        }
        let clip_norm = match o.clip_norm {
            None => defaults.clip_norm,
            Some(0.0) => None,
            Some(c) if c > 0.0 => Some(c),
            Some(c) => bail!("clip-norm = {c} must be non-negative"),
        };
        Ok(PipelineConfig {
            call_table: o.call_table,
            mode,
            tau: in_range("tau", o.tau.unwrap_or(50), 1, 100_000)?,
            embedding: EmbeddingConfig {
                dim: in_range("embedding-dim", o.embedding_dim.unwrap_or(emb.dim), 1, 4096)?,
                epochs: in_range("embedding-epochs", o.embedding_epochs.unwrap_or(emb.epochs), 1, 10_000)?,
                seed,
                ..emb
            },
            hidden: in_range("hidden", o.hidden.unwrap_or(300), 1, 10_000)?,
            layers: in_range("layers", o.layers.unwrap_or(2), 1, 64)?,
            dense: o.dense.map(|d| in_range("dense", d, 1, 100_000)).transpose()?,
            pooling,
            train: TrainConfig {
                batch_size: in_range("batch-size", o.batch_size.unwrap_or(defaults.batch_size), 1, 1_000_000)?,
                epochs: in_range("epochs", o.epochs.unwrap_or(defaults.epochs), 1, 100_000)?,
                dropout,
                learning_rate,
                clip_norm,
                seed,
                ..defaults
            },
            corpus: o.corpus,
            manifest: o.manifest,
            db: o.db,
            vocab: o.vocab,
            model: o.model,
            report: o.report,
        })
    }

    pub fn arch(&self, layers: usize, dim: usize) -> Arch {
        let base = Arch::new(self.hidden, layers, self.tau, dim);
        Arch { dense: self.dense.unwrap_or(base.dense), pooling: self.pooling, ..base }
    }

    pub fn call_table(&self) -> Result<CallTable> {
        match &self.call_table {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading call table {}", p.display()))?;
                CallTable::parse(&text).with_context(|| format!("in call table {}", p.display()))
            }
            None => Ok(CallTable::bundled(self.mode)),
        }
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value.as_deref().with_context(|| format!("--{flag} is required (flag or config file)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_overrides_file() {
        let file: PipelineOptions = toml::from_str("hidden = 16\nlayers = 3\nmode = \"ALL\"").unwrap();
        let cli = PipelineOptions { layers: Some(1), ..Default::default() };
        let c = PipelineConfig::resolve(cli.or(file)).unwrap();
        assert_eq!((c.hidden, c.layers, c.mode), (16, 1, TableMode::All));
        assert_eq!(c.train.epochs, 4);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |o: PipelineOptions| PipelineConfig::resolve(o).is_err();
        assert!(bad(PipelineOptions { dropout: Some(1.0), ..Default::default() }));
        assert!(bad(PipelineOptions { mode: Some("SEL-XYZ".into()), ..Default::default() }));
        assert!(bad(PipelineOptions { tau: Some(0), ..Default::default() }));
        assert!(bad(PipelineOptions { pooling: Some("mean".into()), ..Default::default() }));
        assert!(toml::from_str::<PipelineOptions>("hiden = 3").is_err());
    }
}
