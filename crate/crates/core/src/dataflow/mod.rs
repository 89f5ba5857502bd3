//! Statement-level data-dependency graphs, key-point call discovery and
//! forward/backward slicing.

mod facts;
mod parse;
mod reaching;
mod slice;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use facts::{ArgExpr, CallExpr};
pub use slice::{backward_slice, forward_slice, slice_call, Slice, SliceError, SliceOptions};

use crate::calltable::{CallTable, Direction};
use crate::clex::{SourceFile, Token};
use parse::UnitKind;

pub type StmtId = usize;

pub const GLOBAL_SCOPE: &str = "<global>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub id: StmtId,
    pub file: String,
    pub function: String,
    pub line: u32,
    pub tokens: Vec<Token>,
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
    pub calls: Vec<CallExpr>,
    /// Enclosing mutually exclusive branch arms, outermost first.
    pub arms: Vec<(u32, u16)>,
}

impl Statement {
    pub fn text(&self) -> String {
        crate::clex::join_tokens(&self.tokens)
    }

    pub fn same_function(&self, other: &Statement) -> bool {
        self.file == other.file && self.function == other.function
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Reaching definition inside one function.
    Intra,
    /// From a declaration without initialiser to a later use or definition.
    Declaration,
    /// From a global definition into a function.
    Global,
    /// Call-site argument bound to the callee's parameter.
    Parameter,
    /// Callee return value flowing back to the call site.
    Return,
}

impl EdgeKind {
    pub fn interprocedural(self) -> bool {
        matches!(self, EdgeKind::Parameter | EdgeKind::Return)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DataEdge {
    pub from: StmtId,
    pub to: StmtId,
    pub var: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallEdge {
    pub from: StmtId,
    pub callee: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionInfo {
    pub name: String,
    pub file: String,
    pub header: StmtId,
    pub params: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum DataflowError {
    #[error("{file}:{line}: unbalanced braces; file skipped")]
    UnbalancedBraces { file: String, line: u32 },
}

#[derive(Debug, Clone, Default)]
pub struct DepGraph {
    pub statements: Vec<Statement>,
    pub data_edges: Vec<DataEdge>,
    pub call_edges: Vec<CallEdge>,
    pub functions: Vec<FunctionInfo>,
    pub diagnostics: Vec<DataflowError>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl DepGraph {
    pub fn statement(&self, id: StmtId) -> &Statement {
        &self.statements[id]
    }

    /// Incoming data edges of `id`, as edge references.
    pub fn preds(&self, id: StmtId) -> impl Iterator<Item = &DataEdge> {
        self.preds[id].iter().map(|&e| &self.data_edges[e])
    }

    pub fn succs(&self, id: StmtId) -> impl Iterator<Item = &DataEdge> {
        self.succs[id].iter().map(|&e| &self.data_edges[e])
    }

    pub fn find(&self, file: &str, line: u32) -> Option<&Statement> {
        self.statements.iter().find(|s| s.file == file && s.line == line)
    }

    pub fn is_user_function(&self, name: &str) -> bool {
        self.functions.iter().any(|f| f.name == name)
    }

    pub fn has_edge(&self, from: StmtId, to: StmtId) -> bool {
        self.succs(from).any(|e| e.to == to)
    }

    fn index(&mut self) {
        self.data_edges.sort();
        self.data_edges.dedup();
        self.preds = vec![Vec::new(); self.statements.len()];
        self.succs = vec![Vec::new(); self.statements.len()];
        for (i, e) in self.data_edges.iter().enumerate() {
            self.succs[e.from].push(i);
            self.preds[e.to].push(i);
        }
    }
}

struct FileUnits {
    path: String,
    parsed: parse::ParsedFile,
    facts: Vec<facts::UnitFacts>,
}

/// Build the dependency graph of one program (all of its files).
///
/// `table` decides which library calls receive external input; their
/// arguments count as defined at the call.
pub fn build_dep_graph(files: &[SourceFile], table: &CallTable) -> DepGraph {
    let mut graph = DepGraph::default();
    let mut parsed_files = Vec::new();
    for f in files {
        if let Some(line) = parse::brace_imbalance(&f.tokens) {
            log::warn!("{}:{}: unbalanced braces, skipping file", f.path, line);
            graph.diagnostics.push(DataflowError::UnbalancedBraces { file: f.path.clone(), line });
            continue;
        }
        let parsed = parse::parse_file(&f.tokens);
        let mut param_of = vec![None; parsed.units.len()];
        for func in &parsed.functions {
            param_of[func.header] = Some(func.params.clone());
        }
        let global: BTreeSet<usize> = parsed.globals.iter().copied().collect();
        let facts = parsed
            .units
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let params = param_of[i].as_deref().unwrap_or(&[]);
                facts::analyze_unit(&u.tokens, u.kind, params, table, global.contains(&i))
            })
            .collect();
        parsed_files.push(FileUnits { path: f.path.clone(), parsed, facts });
    }

    // Unit -> statement, per file.
    let mut unit_stmt: Vec<Vec<StmtId>> = Vec::new();
    for (fi, fu) in parsed_files.iter().enumerate() {
        let mut map = vec![usize::MAX; fu.parsed.units.len()];
        let mut scopes: Vec<(String, Vec<usize>, Option<u32>)> =
            vec![(GLOBAL_SCOPE.to_string(), fu.parsed.globals.clone(), None)];
        for func in &fu.parsed.functions {
            let mut us = Vec::new();
            collect_units(&func.body, &mut us);
            us.push(func.header);
            scopes.push((func.name.clone(), us, Some(func.name_line)));
        }
        for (scope, units, name_line) in scopes {
            let mut by_line: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for &u in &units {
                let unit = &fu.parsed.units[u];
                if unit.tokens.is_empty() {
                    continue;
                }
                let line = if unit.kind == UnitKind::FunctionHeader {
                    name_line.unwrap_or_else(|| unit.line())
                } else {
                    unit.line()
                };
                by_line.entry(line).or_default().push(u);
            }
            for (line, mut us) in by_line {
                us.sort_by_key(|&u| {
                    let t = &fu.parsed.units[u].tokens[0];
                    (t.line, t.column)
                });
                let id = graph.statements.len();
                let mut st = Statement {
                    id,
                    file: fu.path.clone(),
                    function: scope.clone(),
                    line,
                    tokens: Vec::new(),
                    defs: BTreeSet::new(),
                    uses: BTreeSet::new(),
                    calls: Vec::new(),
                    arms: fu.parsed.units[us[0]]
                        .arms
                        .iter()
                        .map(|&(c, a)| (c + (fi as u32) * 1_000_000, a))
                        .collect(),
                };
                for &u in &us {
                    let f = &fu.facts[u];
                    st.tokens.extend(fu.parsed.units[u].tokens.iter().cloned());
                    st.defs.extend(f.defs().cloned());
                    st.defs.extend(f.declared.iter().cloned());
                    st.uses.extend(f.uses.iter().cloned());
                    st.calls.extend(f.calls.iter().cloned());
                    if fu.parsed.units[u].arms.len() < st.arms.len() {
                        st.arms = fu.parsed.units[u]
                            .arms
                            .iter()
                            .map(|&(c, a)| (c + (fi as u32) * 1_000_000, a))
                            .collect();
                    }
                    map[u] = id;
                }
                graph.statements.push(st);
            }
        }
        unit_stmt.push(map);
    }

    // Function table across files.
    let mut fn_index: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
    for (fi, fu) in parsed_files.iter().enumerate() {
        for (k, func) in fu.parsed.functions.iter().enumerate() {
            fn_index.entry(func.name.clone()).or_default().push((fi, k));
            graph.functions.push(FunctionInfo {
                name: func.name.clone(),
                file: fu.path.clone(),
                header: unit_stmt[fi][func.header],
                params: func.params.clone(),
            });
        }
    }

    // Intraprocedural edges and return sites.
    let mut returns: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut edges = Vec::new();
    for (fi, fu) in parsed_files.iter().enumerate() {
        let mut globals: HashMap<String, Vec<usize>> = HashMap::new();
        for &g in &fu.parsed.globals {
            let f = &fu.facts[g];
            for v in f.defs().chain(&f.declared) {
                let e = globals.entry(v.clone()).or_default();
                if !e.contains(&g) {
                    e.push(g);
                }
            }
        }
        // Globals reaching each other (e.g. `int n = LIMIT;`).
        for &g in &fu.parsed.globals {
            for v in &fu.facts[g].uses {
                for &d in globals.get(v).into_iter().flatten() {
                    if d != g {
                        edges.push(DataEdge {
                            from: unit_stmt[fi][d],
                            to: unit_stmt[fi][g],
                            var: v.clone(),
                            kind: EdgeKind::Global,
                        });
                    }
                }
            }
        }
        for (k, func) in fu.parsed.functions.iter().enumerate() {
            let mut us = vec![func.header];
            collect_units(&func.body, &mut us);
            us.sort_unstable();
            let mut w = reaching::Walker::new(&fu.parsed.units, &fu.facts, &globals, &us);
            let entry = w.visit(&parse::Node::Unit(func.header), None);
            w.visit(&func.body, entry);
            for (a, b, var, kind) in std::mem::take(&mut w.edges) {
                let (from, to) = (unit_stmt[fi][a], unit_stmt[fi][b]);
                if from != to && from != usize::MAX && to != usize::MAX {
                    edges.push(DataEdge { from, to, var, kind });
                }
            }
            returns.insert((fi, k), w.returns.clone());
        }
    }

    // Argument/parameter and return-value bindings.
    for (fi, fu) in parsed_files.iter().enumerate() {
        for (u, f) in fu.facts.iter().enumerate() {
            let caller = unit_stmt[fi][u];
            if caller == usize::MAX {
                continue;
            }
            for call in f.calls.iter().filter(|c| !c.member) {
                let Some(targets) = fn_index.get(&call.callee) else { continue };
                for &(tf, tk) in targets {
                    let callee = &parsed_files[tf].parsed.functions[tk];
                    let header = unit_stmt[tf][callee.header];
                    graph.call_edges.push(CallEdge { from: caller, callee: call.callee.clone() });
                    for p in callee.params.iter().take(call.args.len()) {
                        if header != caller {
                            edges.push(DataEdge { from: caller, to: header, var: p.clone(), kind: EdgeKind::Parameter });
                        }
                    }
                    for &r in returns.get(&(tf, tk)).into_iter().flatten() {
                        let rs = unit_stmt[tf][r];
                        if rs != caller {
                            edges.push(DataEdge { from: rs, to: caller, var: call.callee.clone(), kind: EdgeKind::Return });
                        }
                    }
                }
            }
        }
    }
    graph.call_edges.dedup();
    graph.data_edges = edges;
    graph.index();
    graph
}

fn collect_units(node: &parse::Node, out: &mut Vec<usize>) {
    use parse::Node::*;
    match node {
        Unit(u) | Case(u) | Return(u) => out.push(*u),
        Break(u) | Continue(u) => out.extend(u.iter().copied()),
        Block(items) => items.iter().for_each(|n| collect_units(n, out)),
        If { header, then, els } => {
            out.push(*header);
            collect_units(then, out);
            if let Some(e) = els {
                collect_units(e, out);
            }
        }
        Loop { header, body, .. } => {
            out.push(*header);
            collect_units(body, out);
        }
        Switch { header, items } => {
            out.push(*header);
            items.iter().for_each(|n| collect_units(n, out));
        }
    }
}

/// A library/API call site serving as a key point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub callee: String,
    pub statement: StmtId,
    pub args: Vec<ArgExpr>,
    pub direction: Direction,
}

/// Every call of a table-listed function, in statement order. Names defined
/// by the program itself shadow the table.
pub fn find_call_sites(graph: &DepGraph, table: &CallTable) -> Vec<CallSite> {
    let mut out = Vec::new();
    for st in &graph.statements {
        if st.function == GLOBAL_SCOPE {
            continue;
        }
        for call in &st.calls {
            if !call.member && graph.is_user_function(&call.callee) {
                continue;
            }
            if let Some(e) = table.lookup(&call.callee, call.member) {
                out.push(CallSite {
                    callee: call.callee.clone(),
                    statement: st.id,
                    args: call.args.clone(),
                    direction: e.direction,
                });
            }
        }
    }
    out
}
