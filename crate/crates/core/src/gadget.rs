//! Code gadgets: assembly from slices, labeling, conflict removal and the
//! on-disk gadget database.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calltable::Direction;
use crate::dataflow::{DepGraph, Slice, StmtId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GadgetDirection {
    Forward,
    Backward,
    /// Several backward slices combined into one gadget.
    MixedBackward,
}

impl GadgetDirection {
    pub fn is_backward(self) -> bool {
        self != GadgetDirection::Forward
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    NotVulnerable,
    Vulnerable,
    Unlabeled,
}

impl Label {
    pub fn class(self) -> Option<usize> {
        match self {
            Label::NotVulnerable => Some(0),
            Label::Vulnerable => Some(1),
            Label::Unlabeled => None,
        }
    }

    pub fn from_class(c: usize) -> Label {
        if c == 1 {
            Label::Vulnerable
        } else {
            Label::NotVulnerable
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    NvdDiff,
    SardGood,
    SardBadOrMixed,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProgramClass {
    Good,
    Bad,
    Mixed,
}

macro_rules! text_enum {
    ($t:ty { $($v:path => $s:literal),* $(,)? }) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($v => $s),* })
            }
        }
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s { $($s => Ok($v),)* _ => Err(s.to_string()) }
            }
        }
    };
}

text_enum!(GadgetDirection {
    GadgetDirection::Forward => "forward",
    GadgetDirection::Backward => "backward",
    GadgetDirection::MixedBackward => "mixed-backward",
});
text_enum!(Label { Label::NotVulnerable => "0", Label::Vulnerable => "1", Label::Unlabeled => "?" });
text_enum!(Provenance {
    Provenance::NvdDiff => "nvd-diff",
    Provenance::SardGood => "sard-good",
    Provenance::SardBadOrMixed => "sard-bad",
    Provenance::Target => "target",
});
text_enum!(ProgramClass { ProgramClass::Good => "good", ProgramClass::Bad => "bad", ProgramClass::Mixed => "mixed" });

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GadgetStatement {
    pub file: String,
    pub function: String,
    pub line: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeGadget {
    pub id: String,
    pub program: String,
    pub provenance: Provenance,
    pub direction: GadgetDirection,
    pub callee: String,
    /// Index of the key call statement in `statements`.
    pub key_index: usize,
    pub statements: Vec<GadgetStatement>,
    pub label: Label,
    /// Queued for manual confirmation of an automatic label.
    pub review: bool,
    /// Symbolic token texts, filled by the symbolizer.
    pub symbolic: Vec<String>,
}

impl CodeGadget {
    pub fn locations(&self) -> Vec<(String, u32)> {
        self.statements.iter().map(|s| (s.file.clone(), s.line)).collect()
    }

    pub fn lines(&self) -> Vec<u32> {
        self.statements.iter().map(|s| s.line).collect()
    }

    pub fn key_statement(&self) -> &GadgetStatement {
        &self.statements[self.key_index]
    }

    pub fn touches(&self, marked: &BTreeSet<(String, u32)>) -> bool {
        self.statements
            .iter()
            .any(|s| marked.iter().any(|(f, l)| *l == s.line && paths_match(&s.file, f)))
    }

    /// Text used to detect identical gadgets: the symbolic form when present.
    pub fn canonical_text(&self) -> String {
        if self.symbolic.is_empty() {
            self.statements.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" \n ")
        } else {
            self.symbolic.join(" ")
        }
    }
}

/// Program-relative paths compare equal when one is a path suffix of the other.
pub fn paths_match(a: &str, b: &str) -> bool {
    let a = a.trim_start_matches("./");
    let b = b.trim_start_matches("./");
    a == b || a.ends_with(&format!("/{b}")) || b.ends_with(&format!("/{a}"))
}

pub fn gadget_id(program: &str, callee: &str, statements: &[GadgetStatement]) -> String {
    let mut h = Sha256::new();
    for part in [program, callee] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    for s in statements {
        h.update(s.file.as_bytes());
        h.update([0u8]);
        h.update(s.line.to_le_bytes());
        h.update(s.text.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..12])
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GadgetError {
    #[error("no slices to assemble")]
    EmptySliceSet,
    #[error("slices belong to different call sites")]
    MixedCallSites,
    #[error("program {program}: bad/mixed program without vulnerable-line annotations")]
    MissingVulnerableLineAnnotation { program: String },
    #[error("gadget database line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("review file line {line}: {reason}")]
    BadReview { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembleOptions {
    /// Order unconstrained functions randomly with this seed instead of by
    /// first appearance.
    pub shuffle_seed: Option<u64>,
}

pub fn assemble(graph: &DepGraph, slices: &[Slice], program: &str, provenance: Provenance) -> Result<CodeGadget, GadgetError> {
    assemble_with(graph, slices, program, provenance, AssembleOptions::default())
}

pub fn assemble_with(
    graph: &DepGraph,
    slices: &[Slice],
    program: &str,
    provenance: Provenance,
    opts: AssembleOptions,
) -> Result<CodeGadget, GadgetError> {
    let first = slices.first().ok_or(GadgetError::EmptySliceSet)?;
    let key = first.key_call.statement;
    if slices.iter().any(|s| s.key_call.statement != key || s.key_call.callee != first.key_call.callee) {
        return Err(GadgetError::MixedCallSites);
    }
    let fn_of = |s: StmtId| {
        let st = graph.statement(s);
        (st.file.clone(), st.function.clone())
    };

    let mut pieces: BTreeMap<(String, String), BTreeSet<(u32, StmtId)>> = BTreeMap::new();
    let mut first_seen: HashMap<(String, String), usize> = HashMap::new();
    let mut before: BTreeSet<((String, String), (String, String))> = BTreeSet::new();
    let mut pos = 0;
    for slice in slices {
        let mut runs: Vec<(String, String)> = Vec::new();
        for &s in &slice.chain {
            let f = fn_of(s);
            pieces.entry(f.clone()).or_default().insert((graph.statement(s).line, s));
            first_seen.entry(f.clone()).or_insert(pos);
            pos += 1;
            if runs.last() != Some(&f) {
                runs.push(f);
            }
        }
        for (i, a) in runs.iter().enumerate() {
            for b in &runs[i + 1..] {
                if a != b {
                    before.insert((a.clone(), b.clone()));
                }
            }
        }
    }
    pieces.entry(fn_of(key)).or_default().insert((graph.statement(key).line, key));
    first_seen.entry(fn_of(key)).or_insert(pos);

    let mut rng = opts.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let tiebreak: HashMap<(String, String), u64> = pieces
        .keys()
        .map(|f| (f.clone(), rng.as_mut().map_or(0, |r| r.gen())))
        .collect();
    let mut remaining: Vec<(String, String)> = pieces.keys().cloned().collect();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let ready: Vec<&(String, String)> = remaining
            .iter()
            .filter(|f| !remaining.iter().any(|g| g != *f && before.contains(&(g.clone(), (*f).clone()))))
            .collect();
        // A cycle of constraints leaves nothing ready; fall back to all.
        let pool = if ready.is_empty() { remaining.iter().collect() } else { ready };
        let next = pool
            .into_iter()
            .min_by_key(|f| (tiebreak[*f], first_seen[*f], f.1.clone()))
            .cloned()
            .unwrap();
        remaining.retain(|f| *f != next);
        order.push(next);
    }

    let mut statements = Vec::new();
    let mut key_index = 0;
    for f in &order {
        for &(_, s) in &pieces[f] {
            if s == key {
                key_index = statements.len();
            }
            let st = graph.statement(s);
            statements.push(GadgetStatement {
                file: st.file.clone(),
                function: st.function.clone(),
                line: st.line,
                text: st.text(),
            });
        }
    }
    let direction = match first.direction {
        Direction::Forward => GadgetDirection::Forward,
        Direction::Backward if slices.len() > 1 => GadgetDirection::MixedBackward,
        Direction::Backward => GadgetDirection::Backward,
    };
    let callee = first.key_call.callee.clone();
    Ok(CodeGadget {
        id: gadget_id(program, &callee, &statements),
        program: program.to_string(),
        provenance,
        direction,
        callee,
        key_index,
        statements,
        label: Label::Unlabeled,
        review: false,
        symbolic: Vec::new(),
    })
}

/// Label 1 when the gadget covers a line deleted or modified by the patch.
/// Positive labels are queued for review.
pub fn label_by_diff(mut gadget: CodeGadget, patch_lines: &BTreeSet<(String, u32)>) -> CodeGadget {
    gadget.label = if gadget.touches(patch_lines) { Label::Vulnerable } else { Label::NotVulnerable };
    gadget.review = gadget.label == Label::Vulnerable;
    gadget
}

pub fn label_by_sard(
    mut gadget: CodeGadget,
    class: ProgramClass,
    vulnerable_lines: &BTreeSet<(String, u32)>,
) -> Result<CodeGadget, GadgetError> {
    gadget.label = match class {
        ProgramClass::Good => Label::NotVulnerable,
        _ if vulnerable_lines.is_empty() => {
            return Err(GadgetError::MissingVulnerableLineAnnotation { program: gadget.program.clone() })
        }
        _ if gadget.touches(vulnerable_lines) => Label::Vulnerable,
        _ => Label::NotVulnerable,
    };
    Ok(gadget)
}

/// Old-file (path, line) pairs of every `-` line in a unified diff.
pub fn parse_unified_diff(text: &str) -> BTreeSet<(String, u32)> {
    let mut out = BTreeSet::new();
    let mut file: Option<String> = None;
    let mut old_line = 0u32;
    // Lines left in the current hunk on the old and new side.
    let (mut old_left, mut new_left) = (0u32, 0u32);
    for line in text.lines() {
        if old_left > 0 || new_left > 0 {
            match line.as_bytes().first() {
                Some(b'-') => {
                    if let Some(f) = &file {
                        out.insert((f.clone(), old_line));
                    }
                    old_line += 1;
                    old_left = old_left.saturating_sub(1);
                }
                Some(b'+') => new_left = new_left.saturating_sub(1),
                Some(b'\\') => {}
                _ => {
                    old_line += 1;
                    old_left = old_left.saturating_sub(1);
                    new_left = new_left.saturating_sub(1);
                }
            }
        } else if let Some(rest) = line.strip_prefix("--- ") {
            let path = rest.split('\t').next().unwrap_or("").trim();
            file = (path != "/dev/null").then(|| strip_diff_prefix(path).to_string());
        } else if let Some(rest) = line.strip_prefix("@@ -") {
            let mut ranges = rest.split_whitespace();
            let (start, old_len) = hunk_range(ranges.next().unwrap_or(""));
            let (_, new_len) = hunk_range(ranges.next().unwrap_or("").trim_start_matches('+'));
            old_line = start;
            old_left = old_len;
            new_left = new_len;
        }
    }
    out
}

fn hunk_range(r: &str) -> (u32, u32) {
    match r.split_once(',') {
        Some((a, b)) => (a.parse().unwrap_or(0), b.parse().unwrap_or(0)),
        None => (r.parse().unwrap_or(0), 1),
    }
}

fn strip_diff_prefix(p: &str) -> &str {
    p.strip_prefix("a/").or_else(|| p.strip_prefix("b/")).unwrap_or(p)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GadgetDatabase {
    pub gadgets: Vec<CodeGadget>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub vulnerable: usize,
    pub not_vulnerable: usize,
    pub unlabeled: usize,
}

const DB_MAGIC: &str = "GADGETDB";
const DB_VERSION: u32 = 1;
const FIELD_SEP: char = '\u{1f}';
const FIXED_FIELDS: usize = 9;

fn clean(s: &str) -> String {
    s.chars().map(|c| if c.is_control() { ' ' } else { c }).collect()
}

impl GadgetDatabase {
    pub fn new(gadgets: Vec<CodeGadget>) -> Self {
        GadgetDatabase { gadgets }
    }

    pub fn len(&self) -> usize {
        self.gadgets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gadgets.is_empty()
    }

    pub fn counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for g in &self.gadgets {
            match g.label {
                Label::Vulnerable => c.vulnerable += 1,
                Label::NotVulnerable => c.not_vulnerable += 1,
                Label::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }

    pub fn direction_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for g in &self.gadgets {
            *m.entry(g.direction.to_string()).or_insert(0) += 1;
        }
        m
    }

    /// Gadgets repeating the canonical text and label of an earlier one.
    pub fn duplicate_count(&self) -> usize {
        let mut seen = BTreeSet::new();
        self.gadgets.iter().filter(|g| !seen.insert((g.canonical_text(), g.label))).count()
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "{DB_MAGIC}{FIELD_SEP}{DB_VERSION}")?;
        for g in &self.gadgets {
            let mut fields = vec![
                g.id.clone(),
                clean(&g.program),
                g.provenance.to_string(),
                g.direction.to_string(),
                clean(&g.callee),
                g.label.to_string(),
                g.key_index.to_string(),
                u8::from(g.review).to_string(),
                clean(&g.symbolic.join(" ")),
            ];
            for s in &g.statements {
                fields.extend([clean(&s.file), clean(&s.function), s.line.to_string(), clean(&s.text)]);
            }
            writeln!(w, "{}", fields.join(&FIELD_SEP.to_string()))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, GadgetError> {
        let mut lines = r.lines().enumerate();
        let bad = |line: usize, reason: &str| GadgetError::Malformed { line: line + 1, reason: reason.to_string() };
        let io_err = |line: usize, e: io::Error| GadgetError::Malformed { line: line + 1, reason: e.to_string() };
        let header = match lines.next() {
            None => return Ok(GadgetDatabase::default()),
            Some((n, l)) => l.map_err(|e| io_err(n, e))?,
        };
        match header.split_once(FIELD_SEP) {
            Some((DB_MAGIC, v)) if v.parse() == Ok(DB_VERSION) => {}
            Some((DB_MAGIC, v)) => return Err(bad(0, &format!("unsupported version {v}"))),
            _ => return Err(bad(0, "not a gadget database")),
        }
        let mut gadgets = Vec::new();
        for (n, line) in lines {
            let line = line.map_err(|e| io_err(n, e))?;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(FIELD_SEP).collect();
            if f.len() < FIXED_FIELDS + 4 || !(f.len() - FIXED_FIELDS).is_multiple_of(4) {
                return Err(bad(n, &format!("unexpected field count {}", f.len())));
            }
            let parse = |i: usize, what: &str| bad(n, &format!("invalid {what} {:?}", f[i]));
            let statements = f[FIXED_FIELDS..]
                .chunks(4)
                .map(|c| {
                    Ok(GadgetStatement {
                        file: c[0].to_string(),
                        function: c[1].to_string(),
                        line: c[2].parse().map_err(|_| bad(n, &format!("invalid line number {:?}", c[2])))?,
                        text: c[3].to_string(),
                    })
                })
                .collect::<Result<Vec<_>, GadgetError>>()?;
            let key_index: usize = f[6].parse().map_err(|_| parse(6, "key index"))?;
            if key_index >= statements.len() {
                return Err(parse(6, "key index"));
            }
            gadgets.push(CodeGadget {
                id: f[0].to_string(),
                program: f[1].to_string(),
                provenance: f[2].parse().map_err(|_| parse(2, "provenance"))?,
                direction: f[3].parse().map_err(|_| parse(3, "direction"))?,
                callee: f[4].to_string(),
                label: f[5].parse().map_err(|_| parse(5, "label"))?,
                key_index,
                review: match f[7] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(parse(7, "review flag")),
                },
                symbolic: crate::clex::tokenize(f[8]).into_iter().map(|t| t.text).collect(),
                statements,
            });
        }
        Ok(GadgetDatabase { gadgets })
    }

    /// Write the review queue: `id<TAB>label<TAB>locations<TAB>code`. The
    /// operator edits the label column and feeds the file back.
    pub fn export_review(&self, mut w: impl Write) -> io::Result<usize> {
        let mut n = 0;
        for g in self.gadgets.iter().filter(|g| g.review) {
            let locs: Vec<String> = g.statements.iter().map(|s| format!("{}:{}", s.file, s.line)).collect();
            let code: Vec<String> = g.statements.iter().map(|s| clean(&s.text).replace('\t', " ")).collect();
            writeln!(w, "{}\t{}\t{}\t{}", g.id, g.label, locs.join(","), code.join(" | "))?;
            n += 1;
        }
        Ok(n)
    }

    /// Apply an edited review file. Returns the number of labels changed.
    pub fn apply_review(&mut self, r: impl BufRead) -> Result<usize, GadgetError> {
        let index: HashMap<String, usize> = self.gadgets.iter().enumerate().map(|(i, g)| (g.id.clone(), i)).collect();
        let mut changed = 0;
        for (n, line) in r.lines().enumerate() {
            let bad = |reason: String| GadgetError::BadReview { line: n + 1, reason };
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let id = parts.next().unwrap_or_default();
            let label: Label = parts
                .next()
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|l| bad(format!("invalid label {l:?}")))?;
            let &i = index.get(id).ok_or_else(|| bad(format!("unknown gadget id {id:?}")))?;
            let g = &mut self.gadgets[i];
            if g.label != label {
                g.label = label;
                changed += 1;
            }
            g.review = false;
        }
        Ok(changed)
    }
}

/// Delete every gadget whose canonical text occurs with both labels.
/// Returns the cleaned database and the number of gadgets removed.
pub fn resolve_conflicts(db: GadgetDatabase) -> (GadgetDatabase, usize) {
    let mut labels: HashMap<String, BTreeSet<Label>> = HashMap::new();
    for g in &db.gadgets {
        if g.label != Label::Unlabeled {
            labels.entry(g.canonical_text()).or_default().insert(g.label);
        }
    }
    let before = db.gadgets.len();
    let gadgets: Vec<CodeGadget> = db
        .gadgets
        .into_iter()
        .filter(|g| labels.get(&g.canonical_text()).is_none_or(|l| l.len() < 2))
        .collect();
    let removed = before - gadgets.len();
    (GadgetDatabase { gadgets }, removed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stmt(line: u32, text: &str) -> GadgetStatement {
        GadgetStatement { file: "a.c".into(), function: "f".into(), line, text: text.into() }
    }

    fn gadget(lines: &[u32], label: Label, symbolic: &str) -> CodeGadget {
        let statements: Vec<_> = lines.iter().map(|&l| stmt(l, "x = y ;")).collect();
        CodeGadget {
            id: gadget_id("p", "strcpy", &statements),
            program: "p".into(),
            provenance: Provenance::SardBadOrMixed,
            direction: GadgetDirection::Backward,
            callee: "strcpy".into(),
            key_index: statements.len() - 1,
            statements,
            label,
            review: false,
            symbolic: symbolic.split_whitespace().map(str::to_string).collect(),
        }
    }

    fn marks(pairs: &[(&str, u32)]) -> BTreeSet<(String, u32)> {
        pairs.iter().map(|(f, l)| (f.to_string(), *l)).collect()
    }

    #[test]
    fn diff_labels() {
        let g = gadget(&[2, 4, 5, 9], Label::Unlabeled, "");
        let hit = label_by_diff(g.clone(), &marks(&[("a.c", 9)]));
        assert_eq!(hit.label, Label::Vulnerable);
        assert!(hit.review);
        assert_eq!(label_by_diff(g.clone(), &BTreeSet::new()).label, Label::NotVulnerable);
        let g2 = gadget(&[2, 4, 5], Label::Unlabeled, "");
        assert_eq!(label_by_diff(g2, &marks(&[("a.c", 9)])).label, Label::NotVulnerable);
        assert_eq!(label_by_diff(g, &marks(&[("b.c", 9)])).label, Label::NotVulnerable);
    }

    #[test]
    fn sard_labels() {
        let g = gadget(&[3, 7], Label::Unlabeled, "");
        let flagged = marks(&[("src/a.c", 7)]);
        assert_eq!(label_by_sard(g.clone(), ProgramClass::Good, &flagged).unwrap().label, Label::NotVulnerable);
        assert_eq!(label_by_sard(g.clone(), ProgramClass::Mixed, &flagged).unwrap().label, Label::Vulnerable);
        assert_eq!(
            label_by_sard(g.clone(), ProgramClass::Bad, &marks(&[("a.c", 8)])).unwrap().label,
            Label::NotVulnerable
        );
        assert!(matches!(
            label_by_sard(g, ProgramClass::Bad, &BTreeSet::new()),
            Err(GadgetError::MissingVulnerableLineAnnotation { .. })
        ));
    }

    #[test]
    fn unified_diff() {
        let diff = "\
diff --git a/src/x.c b/src/x.c
--- a/src/x.c
+++ b/src/x.c
@@ -3,4 +3,4 @@ int f()
 int a;
-char buf[10];
+char buf[11];
 a = 1;
-strcpy(buf, s);
+strncpy(buf, s, 10);
--- /dev/null
+++ b/new.c
@@ -0,0 +1 @@
+int x;
";
        assert_eq!(parse_unified_diff(diff), marks(&[("src/x.c", 4), ("src/x.c", 6)]));
    }

    #[test]
    fn conflicts() {
        let (db, n) = resolve_conflicts(GadgetDatabase::new(vec![
            gadget(&[1], Label::Vulnerable, "VAR1 = 1 ;"),
            gadget(&[2], Label::NotVulnerable, "VAR1 = 1 ;"),
        ]));
        assert_eq!((db.len(), n), (0, 2));

        let unique = GadgetDatabase::new(vec![
            gadget(&[1], Label::Vulnerable, "VAR1 = 1 ;"),
            gadget(&[2], Label::NotVulnerable, "VAR1 = 2 ;"),
        ]);
        assert_eq!(resolve_conflicts(unique.clone()), (unique, 0));

        let (db, n) = resolve_conflicts(GadgetDatabase::new(vec![
            gadget(&[1], Label::Vulnerable, "A"),
            gadget(&[2], Label::Vulnerable, "A"),
            gadget(&[3], Label::NotVulnerable, "A"),
            gadget(&[4], Label::Vulnerable, "B"),
        ]));
        assert_eq!(n, 3);
        assert_eq!(db.gadgets.len(), 1);
        assert_eq!(db.gadgets[0].symbolic, ["B"]);
    }

    #[test]
    fn duplicates_are_counted() {
        let db = GadgetDatabase::new(vec![
            gadget(&[1], Label::Vulnerable, "A"),
            gadget(&[2], Label::Vulnerable, "A"),
            gadget(&[3], Label::NotVulnerable, "B"),
        ]);
        assert_eq!(db.duplicate_count(), 1);
    }

    #[test]
    fn db_round_trip() {
        let mut g = gadget(&[1, 2], Label::Vulnerable, "strcpy ( VAR1 , STR ) ;");
        g.statements[0].text = "char * s = \"a\tb\" ;".into();
        g.review = true;
        let db = GadgetDatabase::new(vec![g, gadget(&[5], Label::Unlabeled, "")]);
        let bytes = db.to_bytes();
        let back = GadgetDatabase::read_from(&bytes[..]).unwrap();
        assert_eq!(back.gadgets[1], db.gadgets[1]);
        assert_eq!(back.gadgets[0].statements[0].text, "char * s = \"a b\" ;");
        assert_eq!(back.gadgets[0].symbolic, db.gadgets[0].symbolic);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn db_rejects_garbage() {
        assert!(matches!(GadgetDatabase::read_from(&b"hello\n"[..]), Err(GadgetError::Malformed { line: 1, .. })));
        let v2 = format!("{DB_MAGIC}{FIELD_SEP}2\n");
        assert!(GadgetDatabase::read_from(v2.as_bytes()).is_err());
        assert!(GadgetDatabase::read_from(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn review_round_trip() {
        let mut g = gadget(&[4], Label::Vulnerable, "A");
        g.review = true;
        let mut db = GadgetDatabase::new(vec![g, gadget(&[5], Label::NotVulnerable, "B")]);
        let mut out = Vec::new();
        assert_eq!(db.export_review(&mut out).unwrap(), 1);
        let text = String::from_utf8(out).unwrap().replacen("\t1\t", "\t0\t", 1);
        assert_eq!(db.apply_review(text.as_bytes()).unwrap(), 1);
        assert_eq!(db.gadgets[0].label, Label::NotVulnerable);
        assert!(!db.gadgets[0].review);
        assert!(db.apply_review(&b"nope\t1\n"[..]).is_err());
    }

    #[test]
    fn ids_depend_on_content() {
        let a = vec![stmt(1, "x ;")];
        let b = vec![stmt(1, "y ;")];
        assert_eq!(gadget_id("p", "f", &a), gadget_id("p", "f", &a));
        assert_ne!(gadget_id("p", "f", &a), gadget_id("p", "f", &b));
        assert_ne!(gadget_id("p", "f", &a), gadget_id("p", "g", &a));
    }

    #[test]
    fn path_suffixes() {
        assert!(paths_match("src/a.c", "a.c"));
        assert!(paths_match("./a.c", "a.c"));
        assert!(!paths_match("xa.c", "a.c"));
    }
}
