//! Forward and backward slices over a `DepGraph`.
//!
//! A slice for one argument starts from the data edges carrying that
//! argument's names and then follows every data edge transitively. When the
//! reachable statements sit in mutually exclusive branch arms (definitions
//! merging before a backward call, or a forward value branching after the
//! call), each consistent choice of arms becomes its own linear chain.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::{CallSite, DepGraph, StmtId};
use crate::calltable::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceOptions {
    pub max_chains: usize,
    /// Maximum parameter/return edges on any path from the key call.
    pub max_hops: usize,
}

impl Default for SliceOptions {
    fn default() -> Self {
        SliceOptions { max_chains: 8, max_hops: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SliceError {
    #[error("argument index {index} out of range for {callee} with {len} arguments")]
    ArgOutOfRange { callee: String, index: usize, len: usize },
    #[error("{callee} is a {actual:?} call; cannot take a {requested:?} slice")]
    WrongDirection { callee: String, actual: Direction, requested: Direction },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub key_call: CallSite,
    pub arg_index: usize,
    pub direction: Direction,
    pub chain: Vec<StmtId>,
}

/// Upper bound on arm assignments tried before capping.
const MAX_ASSIGNMENTS: usize = 256;

pub fn backward_slice(graph: &DepGraph, call: &CallSite, arg_index: usize) -> Result<Vec<Slice>, SliceError> {
    slice_with(graph, call, arg_index, Direction::Backward, SliceOptions::default())
}

pub fn forward_slice(graph: &DepGraph, call: &CallSite, arg_index: usize) -> Result<Vec<Slice>, SliceError> {
    slice_with(graph, call, arg_index, Direction::Forward, SliceOptions::default())
}

/// Slices for every argument of `call`, in the call's own direction.
pub fn slice_call(graph: &DepGraph, call: &CallSite, opts: SliceOptions) -> Vec<Slice> {
    if call.args.is_empty() {
        return vec![Slice {
            key_call: call.clone(),
            arg_index: 0,
            direction: call.direction,
            chain: vec![call.statement],
        }];
    }
    (0..call.args.len())
        .flat_map(|i| slice_with(graph, call, i, call.direction, opts).unwrap_or_default())
        .collect()
}

pub fn slice_with(
    graph: &DepGraph,
    call: &CallSite,
    arg_index: usize,
    direction: Direction,
    opts: SliceOptions,
) -> Result<Vec<Slice>, SliceError> {
    if arg_index >= call.args.len() {
        return Err(SliceError::ArgOutOfRange {
            callee: call.callee.clone(),
            index: arg_index,
            len: call.args.len(),
        });
    }
    if call.direction != direction {
        return Err(SliceError::WrongDirection {
            callee: call.callee.clone(),
            actual: call.direction,
            requested: direction,
        });
    }
    let names = &call.args[arg_index].names;
    let key = call.statement;
    let reach = reachable(graph, key, direction, names, opts.max_hops, None);
    let chains = split_exclusive(graph, key, direction, names, &reach, opts);
    Ok(chains
        .into_iter()
        .map(|chain| Slice { key_call: call.clone(), arg_index, direction, chain })
        .collect())
}

/// Statements reachable from `key` (excluding it), with the order in which
/// functions were first discovered. Restricted to `within` when given.
fn reachable(
    graph: &DepGraph,
    key: StmtId,
    direction: Direction,
    names: &BTreeSet<String>,
    max_hops: usize,
    within: Option<&BTreeSet<StmtId>>,
) -> (BTreeSet<StmtId>, Vec<(String, String)>) {
    let key_st = graph.statement(key);
    let allowed = |s: StmtId| {
        if s == key {
            return false;
        }
        let st = graph.statement(s);
        // The key call bounds the chain inside its own function.
        if st.same_function(key_st) {
            let wrong_side = match direction {
                Direction::Backward => st.line > key_st.line,
                Direction::Forward => st.line < key_st.line,
            };
            if wrong_side {
                return false;
            }
        }
        within.is_none_or(|w| w.contains(&s))
    };
    let mut hops: HashMap<StmtId, usize> = HashMap::new();
    let mut dq: BinaryHeap<Reverse<(usize, StmtId)>> = BinaryHeap::new();
    let mut fn_order = vec![(key_st.file.clone(), key_st.function.clone())];
    let edges = |s: StmtId| -> Vec<(StmtId, &super::DataEdge)> {
        match direction {
            Direction::Backward => graph.preds(s).map(|e| (e.from, e)).collect(),
            Direction::Forward => graph.succs(s).map(|e| (e.to, e)).collect(),
        }
    };
    for (next, e) in edges(key) {
        if !names.contains(&e.var) {
            continue;
        }
        let h = usize::from(e.kind.interprocedural());
        if h <= max_hops && allowed(next) {
            relax(&mut hops, &mut dq, next, h);
        }
    }
    while let Some(Reverse((h, s))) = dq.pop() {
        if hops.get(&s).is_some_and(|&best| best < h) {
            continue;
        }
        let st = graph.statement(s);
        let f = (st.file.clone(), st.function.clone());
        if !fn_order.contains(&f) {
            fn_order.push(f);
        }
        for (next, e) in edges(s) {
            let nh = h + usize::from(e.kind.interprocedural());
            if nh <= max_hops && allowed(next) {
                relax(&mut hops, &mut dq, next, nh);
            }
        }
    }
    (hops.into_keys().collect(), fn_order)
}

fn relax(hops: &mut HashMap<StmtId, usize>, dq: &mut BinaryHeap<Reverse<(usize, StmtId)>>, s: StmtId, h: usize) {
    if hops.get(&s).is_none_or(|&old| h < old) {
        hops.insert(s, h);
        dq.push(Reverse((h, s)));
    }
}

fn split_exclusive(
    graph: &DepGraph,
    key: StmtId,
    direction: Direction,
    names: &BTreeSet<String>,
    reach: &(BTreeSet<StmtId>, Vec<(String, String)>),
    opts: SliceOptions,
) -> Vec<Vec<StmtId>> {
    let (set, fn_order) = reach;
    let key_arms: BTreeMap<u32, u16> = graph.statement(key).arms.iter().copied().collect();
    // Constructs whose arms are hit by at least two reachable statements.
    let mut arms_used: BTreeMap<u32, BTreeSet<u16>> = BTreeMap::new();
    for &s in set {
        for &(c, a) in &graph.statement(s).arms {
            arms_used.entry(c).or_default().insert(a);
        }
    }
    let choices: Vec<(u32, Vec<u16>)> = arms_used
        .into_iter()
        .filter(|(_, a)| a.len() > 1)
        .map(|(c, a)| match key_arms.get(&c) {
            Some(&k) => (c, vec![k]),
            None => (c, a.into_iter().collect()),
        })
        .collect();

    let mut subsets: Vec<BTreeSet<StmtId>> = Vec::new();
    let mut assignment = vec![0usize; choices.len()];
    for _ in 0..MAX_ASSIGNMENTS {
        let pick: BTreeMap<u32, u16> = choices.iter().zip(&assignment).map(|((c, a), &i)| (*c, a[i])).collect();
        let consistent: BTreeSet<StmtId> = set
            .iter()
            .copied()
            .filter(|&s| {
                graph.statement(s).arms.iter().all(|(c, a)| pick.get(c).is_none_or(|p| p == a))
            })
            .collect();
        let (closed, _) = reachable(graph, key, direction, names, opts.max_hops, Some(&consistent));
        if !subsets.contains(&closed) {
            subsets.push(closed);
        }
        // Odometer increment.
        let mut k = 0;
        loop {
            if k == choices.len() {
                break;
            }
            assignment[k] += 1;
            if assignment[k] < choices[k].1.len() {
                break;
            }
            assignment[k] = 0;
            k += 1;
        }
        if k == choices.len() {
            break;
        }
    }
    // Drop chains subsumed by a larger one.
    let maximal: Vec<&BTreeSet<StmtId>> = subsets
        .iter()
        .filter(|s| !subsets.iter().any(|o| o != *s && s.is_subset(o)))
        .collect();
    let mut chains: Vec<Vec<StmtId>> = maximal.into_iter().map(|s| order_chain(graph, key, direction, s, fn_order)).collect();
    chains.sort_by_key(|c| {
        let first = graph.statement(c[0]);
        (first.line, c.iter().map(|&s| graph.statement(s).line).collect::<Vec<_>>())
    });
    chains.truncate(opts.max_chains.max(1));
    chains
}

/// Chain order: whole functions in data-flow order (callers feeding a
/// backward key call come first), ascending lines within each function.
fn order_chain(
    graph: &DepGraph,
    key: StmtId,
    direction: Direction,
    members: &BTreeSet<StmtId>,
    fn_order: &[(String, String)],
) -> Vec<StmtId> {
    let mut all: Vec<StmtId> = members.iter().copied().chain(std::iter::once(key)).collect();
    let rank = |s: StmtId| {
        let st = graph.statement(s);
        let pos = fn_order
            .iter()
            .position(|(f, n)| *f == st.file && *n == st.function)
            .unwrap_or(fn_order.len());
        let fpos = match direction {
            Direction::Backward => fn_order.len() - pos,
            Direction::Forward => pos,
        };
        (fpos, st.line, s)
    };
    all.sort_by_key(|&s| rank(s));
    all.dedup();
    all
}
