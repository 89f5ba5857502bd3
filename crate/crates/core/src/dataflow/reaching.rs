//! Reaching definitions over the statement tree of one function.
//!
//! Loops are iterated to a fixpoint, so a definition late in a loop body
//! reaches uses earlier in the same body.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::facts::UnitFacts;
use super::parse::{Node, Unit, UnitKind};
use super::EdgeKind;

type Defs = BTreeMap<String, BTreeSet<usize>>;
type State = Option<Defs>;

pub(crate) type UnitEdge = (usize, usize, String, EdgeKind);

fn union(a: State, b: State) -> State {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(mut a), Some(b)) => {
            for (k, v) in b {
                a.entry(k).or_default().extend(v);
            }
            Some(a)
        }
    }
}

pub(crate) struct Walker<'a> {
    pub units: &'a [Unit],
    pub facts: &'a [UnitFacts],
    /// Global units defining or declaring each name.
    pub globals: &'a HashMap<String, Vec<usize>>,
    decls: HashMap<String, Vec<usize>>,
    pub edges: BTreeSet<UnitEdge>,
    pub returns: Vec<usize>,
    breaks: Vec<Vec<State>>,
    continues: Vec<Vec<State>>,
}

const MAX_LOOP_ITERATIONS: usize = 16;

impl<'a> Walker<'a> {
    pub fn new(
        units: &'a [Unit],
        facts: &'a [UnitFacts],
        globals: &'a HashMap<String, Vec<usize>>,
        function_units: &[usize],
    ) -> Self {
        let mut decls: HashMap<String, Vec<usize>> = HashMap::new();
        for &u in function_units {
            for v in &facts[u].declared {
                decls.entry(v.clone()).or_default().push(u);
            }
        }
        Walker {
            units,
            facts,
            globals,
            decls,
            edges: BTreeSet::new(),
            returns: Vec::new(),
            breaks: Vec::new(),
            continues: Vec::new(),
        }
    }

    /// Declaration of `v` in scope at unit `u`: the closest preceding one.
    fn decl_for(&self, v: &str, u: usize) -> Option<usize> {
        let ds = self.decls.get(v)?;
        ds.iter().rev().find(|&&d| d <= u).or(ds.first()).copied()
    }

    fn visit_unit(&mut self, u: usize, state: State) -> State {
        let mut st = state.unwrap_or_default();
        let f = &self.facts[u];
        for v in &f.uses {
            match st.get(v).filter(|s| !s.is_empty()) {
                Some(ds) => {
                    for &d in ds {
                        self.edges.insert((d, u, v.clone(), EdgeKind::Intra));
                    }
                }
                None => {
                    if let Some(d) = self.decl_for(v, u) {
                        if d != u {
                            self.edges.insert((d, u, v.clone(), EdgeKind::Declaration));
                        }
                    } else if let Some(gs) = self.globals.get(v) {
                        for &g in gs {
                            self.edges.insert((g, u, v.clone(), EdgeKind::Global));
                        }
                    }
                }
            }
        }
        for v in f.strong.iter().chain(&f.weak) {
            if let Some(d) = self.decl_for(v, u) {
                let decl_only = !self.facts[d].strong.contains(v);
                if d != u && decl_only {
                    self.edges.insert((d, u, v.clone(), EdgeKind::Declaration));
                }
            } else if let Some(gs) = self.globals.get(v) {
                if f.strong.contains(v) {
                    for &g in gs {
                        self.edges.insert((g, u, v.clone(), EdgeKind::Global));
                    }
                }
            }
        }
        for v in &f.declared {
            if !f.strong.contains(v) {
                st.insert(v.clone(), BTreeSet::new());
            }
        }
        for v in &f.strong {
            st.insert(v.clone(), BTreeSet::from([u]));
        }
        for v in &f.weak {
            if !f.strong.contains(v) {
                st.entry(v.clone()).or_default().insert(u);
            }
        }
        Some(st)
    }

    pub fn visit(&mut self, node: &Node, state: State) -> State {
        match node {
            Node::Unit(u) | Node::Case(u) => self.visit_unit(*u, state),
            Node::Block(items) => items.iter().fold(state, |s, n| self.visit(n, s)),
            Node::If { header, then, els } => {
                let h = self.visit_unit(*header, state);
                let t = self.visit(then, h.clone());
                let e = match els {
                    Some(e) => self.visit(e, h),
                    None => h,
                };
                union(t, e)
            }
            Node::Loop { header, body, test_after } => self.visit_loop(*header, body, *test_after, state),
            Node::Switch { header, items } => {
                let h = self.visit_unit(*header, state);
                self.breaks.push(Vec::new());
                let mut cur: State = None;
                let mut has_default = false;
                for item in items {
                    if let Node::Case(u) = item {
                        has_default |= self.units[*u].tokens.first().is_some_and(|t| t.is("default"));
                        cur = union(cur, h.clone());
                    }
                    cur = self.visit(item, cur);
                }
                let mut out = cur;
                for b in self.breaks.pop().unwrap_or_default() {
                    out = union(out, b);
                }
                if !has_default {
                    out = union(out, h);
                }
                out
            }
            Node::Return(u) => {
                self.visit_unit(*u, state);
                let has_value = self.units[*u].tokens.len() > 2
                    && self.units[*u].kind == UnitKind::Return;
                if has_value {
                    self.returns.push(*u);
                }
                None
            }
            Node::Break(u) => {
                let s = match u {
                    Some(u) => self.visit_unit(*u, state),
                    None => state,
                };
                if let Some(f) = self.breaks.last_mut() {
                    f.push(s);
                }
                None
            }
            Node::Continue(u) => {
                let s = match u {
                    Some(u) => self.visit_unit(*u, state),
                    None => state,
                };
                if let Some(f) = self.continues.last_mut() {
                    f.push(s);
                }
                None
            }
        }
    }

    fn visit_loop(&mut self, header: usize, body: &Node, test_after: bool, state: State) -> State {
        let mut entry = state;
        let mut breaks = Vec::new();
        for _ in 0..MAX_LOOP_ITERATIONS {
            self.breaks.push(Vec::new());
            self.continues.push(Vec::new());
            let back = if test_after {
                let b = self.visit(body, entry.clone());
                let c = self.continues.pop().unwrap_or_default().into_iter().fold(b, union);
                self.visit_unit(header, c)
            } else {
                let h = self.visit_unit(header, entry.clone());
                let b = self.visit(body, h);
                self.continues.pop().unwrap_or_default().into_iter().fold(b, union)
            };
            breaks = self.breaks.pop().unwrap_or_default();
            let next = union(entry.clone(), back);
            if next == entry {
                break;
            }
            entry = next;
        }
        let exit = if test_after {
            entry
        } else {
            self.visit_unit(header, entry)
        };
        breaks.into_iter().fold(exit, union)
    }
}
