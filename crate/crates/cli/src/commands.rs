use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use gadgetscan::blstm::{cross_validate, detect, predict, train, BlstmModel, Detection};
use gadgetscan::calltable::known_library_names;
use gadgetscan::evalkit::{compute_metrics, split_programs, table_header, table_row, ConfusionCounts, MetricReport};
use gadgetscan::gadget::{resolve_conflicts, CodeGadget, GadgetDatabase, Label};
use gadgetscan::pipeline::{encode_gadgets, extract_program, token_corpus, ExtractOptions, LabelManifest, ProgramSource};
use gadgetscan::symbolizer::Symbolizer;
use gadgetscan::vectorizer::{train_embeddings, Vocabulary};
use serde_json::{json, Value};

use crate::config::PipelineConfig;
use crate::corpus::load_corpus;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("prediction and ground-truth ids differ: {} only in predictions ({}), {} only in ground truth ({})",
        .only_predicted.len(), preview(.only_predicted), .only_truth.len(), preview(.only_truth))]
    IdMismatch { only_predicted: Vec<String>, only_truth: Vec<String> },
    #[error("no labeled gadgets in {0}")]
    NoLabeledGadgets(PathBuf),
}

fn preview(ids: &[String]) -> String {
    let mut s = ids.iter().take(5).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > 5 {
        s.push_str(", ...");
    }
    s
}

/// Line-delimited JSON records, written only when a report path is set.
pub struct Report {
    out: Option<BufWriter<File>>,
}

impl Report {
    pub fn open(path: Option<&Path>) -> Result<Report> {
        let out = match path {
            Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
            None => None,
        };
        Ok(Report { out })
    }

    pub fn record(&mut self, v: Value) -> Result<()> {
        if let Some(w) = &mut self.out {
            serde_json::to_writer(&mut *w, &v)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        if let Some(mut w) = self.out {
            w.flush()?;
        }
        Ok(())
    }
}

fn metrics_json(c: &ConfusionCounts) -> Value {
    let MetricReport { fpr, fnr, tpr, precision, f1 } = compute_metrics(c);
    json!({ "tp": c.tp, "fp": c.fp, "fn": c.fn_, "tn": c.tn,
            "fpr": fpr, "fnr": fnr, "tpr": tpr, "precision": precision, "f1": f1 })
}

fn read_db(path: &Path) -> Result<GadgetDatabase> {
    let f = File::open(path).with_context(|| format!("opening gadget database {}", path.display()))?;
    GadgetDatabase::read_from(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_manifest(path: &Path) -> Result<LabelManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    LabelManifest::parse(&text, |p| std::fs::read_to_string(base.join(p)))
        .with_context(|| format!("in manifest {}", path.display()))
}

/// Extract gadgets from programs, reporting diagnostics with file/line.
fn extract_all(programs: &[ProgramSource], cfg: &PipelineConfig, report: &mut Report) -> Result<Vec<CodeGadget>> {
    let table = cfg.call_table()?;
    let opts = ExtractOptions::default();
    let mut gadgets = Vec::new();
    for p in programs {
        let ex = extract_program(p, &table, &opts);
        for e in &ex.lex_errors {
            log::warn!("{}: {e}", p.name);
        }
        for e in &ex.dataflow_errors {
            log::warn!("{}: {e}", p.name);
        }
        report.record(json!({
            "kind": "program", "program": p.name, "files": p.files.len(), "gadgets": ex.gadgets.len(),
            "slices": ex.slices, "diagnostics": ex.lex_errors.len() + ex.dataflow_errors.len(),
            "ms": ex.elapsed.as_secs_f64() * 1e3,
        }))?;
        gadgets.extend(ex.gadgets);
    }
    Ok(gadgets)
}

pub struct ExtractArgs {
    pub export_review: Option<PathBuf>,
    pub apply_review: Option<PathBuf>,
}

pub fn extract(cfg: &PipelineConfig, args: &ExtractArgs) -> Result<()> {
    let corpus = cfg.require(&cfg.corpus, "corpus")?;
    let out = cfg.require(&cfg.db, "db")?;
    let mut report = Report::open(cfg.report.as_deref())?;
    let start = Instant::now();
    let programs = load_corpus(corpus)?;
    if programs.is_empty() {
        log::warn!("corpus {} contains no C/C++ programs", corpus.display());
    }
    let mut gadgets = extract_all(&programs, cfg, &mut report)?;
    let elapsed = start.elapsed();
    if let Some(m) = &cfg.manifest {
        gadgets = load_manifest(m)?.apply(gadgets)?;
    }
    let mut db = GadgetDatabase::new(gadgets);
    if let Some(p) = &args.apply_review {
        let f = File::open(p).with_context(|| format!("opening review file {}", p.display()))?;
        let changed = db.apply_review(BufReader::new(f)).with_context(|| format!("in review file {}", p.display()))?;
        println!("review: {changed} labels changed");
    }
    let (db, removed) = resolve_conflicts(db);
    if let Some(p) = &args.export_review {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
        let n = db.export_review(&mut w)?;
        w.flush()?;
        println!("review: {n} gadgets queued in {}", p.display());
    }
    if db.is_empty() {
        log::warn!("no gadgets extracted");
    }
    write_file(out, &db.to_bytes())?;

    let counts = db.counts();
    let directions = db.direction_counts();
    let per_gadget_ms = if db.is_empty() { 0.0 } else { elapsed.as_secs_f64() * 1e3 / db.len() as f64 };
    println!("programs      {}", programs.len());
    println!("gadgets       {}", db.len());
    println!("  vulnerable  {}", counts.vulnerable);
    println!("  safe        {}", counts.not_vulnerable);
    println!("  unlabeled   {}", counts.unlabeled);
    for (d, n) in &directions {
        println!("  {d:<11} {n}");
    }
    println!("conflicts     {removed} removed");
    println!("duplicates    {}", db.duplicate_count());
    println!("time          {per_gadget_ms:.2} ms/gadget");
    report.record(json!({
        "kind": "extract", "programs": programs.len(), "gadgets": db.len(),
        "vulnerable": counts.vulnerable, "not_vulnerable": counts.not_vulnerable, "unlabeled": counts.unlabeled,
        "directions": directions, "conflicts_removed": removed, "duplicates": db.duplicate_count(),
        "ms_per_gadget": per_gadget_ms,
    }))?;
    report.finish()
}

fn labeled(db: GadgetDatabase, path: &Path) -> Result<Vec<CodeGadget>> {
    let total = db.len();
    let gadgets: Vec<CodeGadget> = db.gadgets.into_iter().filter(|g| g.label != Label::Unlabeled).collect();
    if gadgets.len() < total {
        log::warn!("{}: {} unlabeled gadgets ignored", path.display(), total - gadgets.len());
    }
    if gadgets.is_empty() {
        bail!(CliError::NoLabeledGadgets(path.to_path_buf()));
    }
    Ok(gadgets)
}

fn embed(gadgets: &[CodeGadget], cfg: &PipelineConfig) -> Result<Vocabulary> {
    Ok(train_embeddings(&token_corpus(gadgets), &cfg.embedding)?)
}

pub fn train_cmd(cfg: &PipelineConfig, folds: Option<usize>) -> Result<()> {
    let db_path = cfg.require(&cfg.db, "db")?;
    let vocab_path = cfg.require(&cfg.vocab, "vocab")?;
    let model_path = cfg.require(&cfg.model, "model")?;
    let mut report = Report::open(cfg.report.as_deref())?;
    let gadgets = labeled(read_db(db_path)?, db_path)?;
    let vocab = embed(&gadgets, cfg)?;
    let samples = encode_gadgets(&gadgets, &vocab, cfg.tau);
    let arch = cfg.arch(cfg.layers, vocab.dim());
    let (model, train_report) = match folds {
        Some(k) => {
            let cv = cross_validate(&samples, k, &vocab.hash(), &cfg.train, arch)?;
            println!("{}", table_header());
            for (i, c) in cv.folds.iter().enumerate() {
                println!("{}", table_row(&format!("fold {}", i + 1), c));
                report.record(json!({ "kind": "fold", "fold": i + 1, "metrics": metrics_json(c) }))?;
            }
            println!("{}", table_row("all folds", &cv.total));
            report.record(json!({ "kind": "cross-validation", "folds": k, "metrics": metrics_json(&cv.total) }))?;
            (cv.model, cv.report)
        }
        None => train(&samples, &vocab.hash(), &cfg.train, arch)?,
    };
    for e in &train_report.epochs {
        println!("epoch {:>3}  loss {:.4}", e.epoch, e.loss);
        report.record(json!({ "kind": "epoch", "epoch": e.epoch, "loss": e.loss }))?;
    }
    for w in &train_report.warnings {
        report.record(json!({ "kind": "warning", "message": w }))?;
    }
    write_file(vocab_path, &vocab.to_bytes())?;
    write_file(model_path, &model.to_bytes())?;
    println!("trained on {} gadgets; vocabulary {} tokens", samples.len(), vocab.len());
    report.record(json!({
        "kind": "train", "gadgets": samples.len(), "vocabulary": vocab.len(), "vocab_hash": vocab.hash(),
        "parameters": model.parameter_count(),
    }))?;
    report.finish()
}

fn load_model(cfg: &PipelineConfig) -> Result<(BlstmModel, Vocabulary)> {
    let vocab_path = cfg.require(&cfg.vocab, "vocab")?;
    let model_path = cfg.require(&cfg.model, "model")?;
    let vbytes = std::fs::read(vocab_path).with_context(|| format!("reading {}", vocab_path.display()))?;
    let vocab = Vocabulary::from_bytes(&vbytes).with_context(|| format!("loading {}", vocab_path.display()))?;
    let mbytes = std::fs::read(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let model = BlstmModel::from_bytes_for(&mbytes, &vocab)
        .with_context(|| format!("loading {} with {}", model_path.display(), vocab_path.display()))?;
    Ok((model, vocab))
}

pub fn detect_cmd(cfg: &PipelineConfig, targets: &[PathBuf]) -> Result<()> {
    let (model, vocab) = load_model(cfg)?;
    let targets: Vec<&Path> = if targets.is_empty() {
        vec![cfg.require(&cfg.corpus, "corpus")?]
    } else {
        targets.iter().map(PathBuf::as_path).collect()
    };
    let mut report = Report::open(cfg.report.as_deref())?;
    let mut programs = Vec::new();
    for t in targets {
        programs.extend(load_corpus(t)?);
    }
    let gadgets = extract_all(&programs, cfg, &mut report)?;
    let symbolizer = Symbolizer::new(known_library_names(), Default::default());
    let found = detect(&model, &vocab, &gadgets, &symbolizer)?;
    for d in &found {
        report.record(json!({ "kind": "detection", "detection": d }))?;
    }
    let flagged: Vec<&Detection> = found.iter().filter(|d| d.class == 1).collect();
    if flagged.is_empty() {
        println!("no vulnerable gadgets among {}", found.len());
    } else {
        println!("{:<8} {:<16} {:<12} locations", "p(vuln)", "program", "call");
        for d in &flagged {
            let locs: Vec<String> = d.locations.iter().map(|(f, l)| format!("{f}:{l}")).collect();
            println!("{:<8.3} {:<16} {:<12} {}", d.probability, d.program, d.callee, locs.join(" "));
        }
        println!("{} of {} gadgets flagged", flagged.len(), found.len());
    }
    report.finish()
}

/// `gadget_id -> class` from detection records or `id<TAB>class` lines.
fn read_predictions(path: &Path) -> Result<BTreeMap<String, usize>> {
    let f = File::open(path).with_context(|| format!("opening predictions {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let ctx = || format!("{}:{}", path.display(), n + 1);
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (id, class) = if l.starts_with('{') {
            let v: Value = serde_json::from_str(l).with_context(ctx)?;
            if v["kind"] != "detection" {
                continue;
            }
            let d: Detection = serde_json::from_value(v["detection"].clone()).with_context(ctx)?;
            (d.gadget_id, d.class)
        } else {
            let (id, c) = l.split_once('\t').with_context(|| format!("{}: expected id<TAB>class", ctx()))?;
            let c: usize = c.trim().parse().with_context(ctx)?;
            if c > 1 {
                bail!("{}: class must be 0 or 1", ctx());
            }
            (id.to_string(), c)
        };
        out.insert(id, class);
    }
    Ok(out)
}

/// Ground truth from a gadget database or `id<TAB>label` lines.
fn read_truth(path: &Path) -> Result<BTreeMap<String, usize>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading ground truth {}", path.display()))?;
    if bytes.starts_with(b"GADGETDB") {
        let db = GadgetDatabase::read_from(&bytes[..]).with_context(|| format!("reading {}", path.display()))?;
        return Ok(db.gadgets.iter().filter_map(|g| g.label.class().map(|c| (g.id.clone(), c))).collect());
    }
    let mut out = BTreeMap::new();
    for (n, line) in String::from_utf8_lossy(&bytes).lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let ctx = || format!("{}:{}", path.display(), n + 1);
        let (id, c) = l.split_once('\t').with_context(|| format!("{}: expected id<TAB>label", ctx()))?;
        let label: Label = c.trim().parse().map_err(|_| anyhow::anyhow!("{}: bad label {c:?}", ctx()))?;
        if let Some(c) = label.class() {
            out.insert(id.to_string(), c);
        }
    }
    Ok(out)
}

pub fn eval_cmd(cfg: &PipelineConfig, predictions: &Path, truth: &Path) -> Result<()> {
    let pred = read_predictions(predictions)?;
    let truth = read_truth(truth)?;
    let p: BTreeSet<&String> = pred.keys().collect();
    let t: BTreeSet<&String> = truth.keys().collect();
    if p != t {
        bail!(CliError::IdMismatch {
            only_predicted: p.difference(&t).map(|s| s.to_string()).collect(),
            only_truth: t.difference(&p).map(|s| s.to_string()).collect(),
        });
    }
    let counts = ConfusionCounts::from_pairs(truth.iter().map(|(id, &y)| (y, pred[id])));
    println!("{}", table_header());
    println!("{}", table_row("gadgets", &counts));
    let mut report = Report::open(cfg.report.as_deref())?;
    report.record(json!({ "kind": "metrics", "samples": counts.total(), "metrics": metrics_json(&counts) }))?;
    report.finish()
}

pub fn sweep_cmd(cfg: &PipelineConfig, layers: &[usize], ratio: f64) -> Result<()> {
    let db_path = cfg.require(&cfg.db, "db")?;
    let gadgets = labeled(read_db(db_path)?, db_path)?;
    let names: Vec<String> = gadgets.iter().map(|g| g.program.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let (train_names, test_names) = split_programs(&names, ratio, cfg.train.seed)?;
    let train_names: BTreeSet<String> = train_names.into_iter().collect();
    let (train_set, test_set): (Vec<CodeGadget>, Vec<CodeGadget>) =
        gadgets.into_iter().partition(|g| train_names.contains(&g.program));
    log::info!("{} training programs, {} held out", train_names.len(), test_names.len());
    let vocab = embed(&train_set, cfg)?;
    let train_vec = encode_gadgets(&train_set, &vocab, cfg.tau);
    let test_vec = encode_gadgets(&test_set, &vocab, cfg.tau);
    let mut report = Report::open(cfg.report.as_deref())?;
    println!("{}", table_header());
    for &l in layers {
        let (model, _) = train(&train_vec, &vocab.hash(), &cfg.train, cfg.arch(l, vocab.dim()))?;
        let preds = predict(&model, &test_vec)?;
        let truth = test_vec.iter().map(|s| s.label.class().unwrap_or(0));
        let counts = ConfusionCounts::from_pairs(truth.zip(preds.iter().map(|p| p.0)));
        println!("{}", table_row(&format!("layers={l}"), &counts));
        report.record(json!({ "kind": "sweep", "layers": l, "metrics": metrics_json(&counts) }))?;
    }
    report.finish()
}
