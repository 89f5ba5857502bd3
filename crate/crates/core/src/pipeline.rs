//! End-to-end extraction: source files to labeled, symbolized gadgets.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::calltable::CallTable;
use crate::clex::{lex_file, LexError};
use crate::dataflow::{build_dep_graph, find_call_sites, slice_call, DataflowError, SliceOptions};
use crate::gadget::{
    assemble_with, label_by_diff, label_by_sard, parse_unified_diff, AssembleOptions, CodeGadget, GadgetError,
    Label, ProgramClass, Provenance,
};
use crate::symbolizer::{SymbolizeOptions, Symbolizer};
use crate::vectorizer::{encode_tokens, GadgetVector, Vocabulary};

/// A program: a set of source files analyzed together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramSource {
    pub name: String,
    /// (program-relative path, contents), sorted by path.
    pub files: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub slice: SliceOptions,
    pub assemble: AssembleOptions,
    pub symbolize: SymbolizeOptions,
}

#[derive(Debug, Default)]
pub struct Extraction {
    pub gadgets: Vec<CodeGadget>,
    pub slices: usize,
    pub lex_errors: Vec<LexError>,
    pub dataflow_errors: Vec<DataflowError>,
    pub elapsed: Duration,
}

pub fn extract_program(program: &ProgramSource, table: &CallTable, opts: &ExtractOptions) -> Extraction {
    let start = Instant::now();
    let files: Vec<_> = program.files.iter().map(|(p, text)| lex_file(text, p)).collect();
    let lex_errors = files.iter().flat_map(|f| f.errors.clone()).collect();
    let graph = build_dep_graph(&files, table);
    let symbolizer = Symbolizer::new(crate::calltable::known_library_names(), opts.symbolize);
    let mut gadgets = Vec::new();
    let mut slices = 0;
    let mut seen = BTreeSet::new();
    for call in find_call_sites(&graph, table) {
        let s = slice_call(&graph, &call, opts.slice);
        slices += s.len();
        let Ok(mut g) = assemble_with(&graph, &s, &program.name, Provenance::Target, opts.assemble) else {
            continue;
        };
        // Two calls of the same callee on one line assemble identically.
        if !seen.insert(g.id.clone()) {
            continue;
        }
        symbolizer.apply(&mut g);
        gadgets.push(g);
    }
    Extraction { gadgets, slices, lex_errors, dataflow_errors: graph.diagnostics, elapsed: start.elapsed() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProgramLabel {
    Sard { class: ProgramClass, lines: BTreeSet<(String, u32)> },
    Diff { lines: BTreeSet<(String, u32)> },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("manifest line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("manifest line {line}: cannot read diff {path}: {reason}")]
    Diff { line: usize, path: String, reason: String },
}

/// Per-program ground truth. One record per line:
/// `program<TAB>good|bad|mixed|diff<TAB>payload`, where the payload is a
/// comma-separated `file:line` list for bad/mixed and a diff path for diff.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelManifest {
    pub programs: BTreeMap<String, ProgramLabel>,
}

impl LabelManifest {
    pub fn parse(
        text: &str,
        mut load_diff: impl FnMut(&str) -> std::io::Result<String>,
    ) -> Result<Self, ManifestError> {
        let mut programs: BTreeMap<String, ProgramLabel> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let l = raw.trim_end();
            if l.trim().is_empty() || l.starts_with('#') {
                continue;
            }
            let bad = |reason: String| ManifestError::Malformed { line, reason };
            let mut parts = l.splitn(3, '\t');
            let program = parts.next().unwrap_or_default().trim().to_string();
            let kind = parts.next().ok_or_else(|| bad("missing kind".into()))?.trim();
            let payload = parts.next().unwrap_or("").trim();
            let label = match kind {
                "good" => ProgramLabel::Sard { class: ProgramClass::Good, lines: BTreeSet::new() },
                "bad" | "mixed" => {
                    let class = if kind == "bad" { ProgramClass::Bad } else { ProgramClass::Mixed };
                    ProgramLabel::Sard { class, lines: parse_locations(payload).map_err(bad)? }
                }
                "diff" => {
                    let diff = load_diff(payload).map_err(|e| ManifestError::Diff {
                        line,
                        path: payload.to_string(),
                        reason: e.to_string(),
                    })?;
                    ProgramLabel::Diff { lines: parse_unified_diff(&diff) }
                }
                k => return Err(bad(format!("unknown kind {k:?}"))),
            };
            match (programs.get_mut(&program), label) {
                (Some(ProgramLabel::Sard { class, lines }), ProgramLabel::Sard { class: c2, lines: l2 }) => {
                    if *class == ProgramClass::Good || c2 == ProgramClass::Mixed {
                        *class = c2;
                    }
                    lines.extend(l2);
                }
                (Some(ProgramLabel::Diff { lines }), ProgramLabel::Diff { lines: l2 }) => lines.extend(l2),
                (Some(_), _) => return Err(bad(format!("program {program} mixes diff and SARD labels"))),
                (None, label) => {
                    programs.insert(program, label);
                }
            }
        }
        Ok(LabelManifest { programs })
    }

    /// Label gadgets of listed programs; others stay unlabeled targets.
    pub fn apply(&self, gadgets: Vec<CodeGadget>) -> Result<Vec<CodeGadget>, GadgetError> {
        gadgets
            .into_iter()
            .map(|mut g| match self.programs.get(&g.program) {
                None => {
                    g.provenance = Provenance::Target;
                    g.label = Label::Unlabeled;
                    Ok(g)
                }
                Some(ProgramLabel::Diff { lines }) => {
                    g.provenance = Provenance::NvdDiff;
                    Ok(label_by_diff(g, lines))
                }
                Some(ProgramLabel::Sard { class, lines }) => {
                    g.provenance =
                        if *class == ProgramClass::Good { Provenance::SardGood } else { Provenance::SardBadOrMixed };
                    label_by_sard(g, *class, lines)
                }
            })
            .collect()
    }
}

fn parse_locations(payload: &str) -> Result<BTreeSet<(String, u32)>, String> {
    payload
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|loc| {
            let (file, line) = loc.rsplit_once(':').ok_or_else(|| format!("expected file:line, got {loc:?}"))?;
            let line = line.parse().map_err(|_| format!("bad line number in {loc:?}"))?;
            Ok((file.to_string(), line))
        })
        .collect()
}

/// Symbolic token sequences of gadgets, for embedding training.
pub fn token_corpus(gadgets: &[CodeGadget]) -> Vec<Vec<String>> {
    gadgets.iter().map(|g| g.symbolic.clone()).collect()
}

/// Encode gadgets using their stored symbolic tokens.
pub fn encode_gadgets(gadgets: &[CodeGadget], vocab: &Vocabulary, tau: usize) -> Vec<GadgetVector> {
    gadgets
        .iter()
        .map(|g| {
            let (indices, matrix) = encode_tokens(&g.symbolic, g.direction, vocab, tau);
            GadgetVector { gadget_id: g.id.clone(), matrix, indices, label: g.label, direction: g.direction }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calltable::TableMode;
    use crate::fixtures::{EXAMPLE, EXAMPLE_PATH};

    fn example() -> ProgramSource {
        ProgramSource { name: "example".into(), files: vec![(EXAMPLE_PATH.into(), EXAMPLE.into())] }
    }

    #[test]
    fn example_extraction() {
        let ex = extract_program(&example(), &CallTable::bundled(TableMode::SelCwe119), &ExtractOptions::default());
        assert_eq!(ex.slices, 2);
        assert_eq!(ex.gadgets.len(), 1);
        let g = &ex.gadgets[0];
        assert_eq!(g.lines(), [13, 15, 18, 19, 2, 4, 5, 9]);
        assert_eq!(g.key_statement().line, 9);
        assert!(g.symbolic.iter().any(|t| t == "VAR1"));
    }

    #[test]
    fn manifest_parsing() {
        let text = "# comment\np1\tgood\np2\tbad\ta.c:9, b.c:3\np3\tdiff\tp3.diff\np2\tmixed\ta.c:10\n";
        let m = LabelManifest::parse(text, |p| {
            assert_eq!(p, "p3.diff");
            Ok("--- a/x.c\n+++ b/x.c\n@@ -4,1 +4,1 @@\n-old\n+new\n".into())
        })
        .unwrap();
        assert_eq!(m.programs.len(), 3);
        let ProgramLabel::Sard { class, lines } = &m.programs["p2"] else { panic!() };
        assert_eq!(*class, ProgramClass::Mixed);
        assert_eq!(lines.len(), 3);
        assert_eq!(m.programs["p3"], ProgramLabel::Diff { lines: BTreeSet::from([("x.c".to_string(), 4)]) });
        assert!(LabelManifest::parse("p\tweird\n", |_| Ok(String::new())).is_err());
        assert!(LabelManifest::parse("p\tbad\tnoline\n", |_| Ok(String::new())).is_err());
    }

    #[test]
    fn labels_applied() {
        let ex = extract_program(&example(), &CallTable::bundled(TableMode::SelCwe119), &ExtractOptions::default());
        let m = LabelManifest::parse("example\tbad\texample.c:9\n", |_| Ok(String::new())).unwrap();
        let g = m.apply(ex.gadgets.clone()).unwrap();
        assert_eq!(g[0].label, Label::Vulnerable);
        assert_eq!(g[0].provenance, Provenance::SardBadOrMixed);
        let none = LabelManifest::default().apply(ex.gadgets).unwrap();
        assert_eq!(none[0].label, Label::Unlabeled);
    }
}
