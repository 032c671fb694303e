//! Worst-case timed trace enumeration over a TIPsGraph.
//!
//! A working-list, depth-first traversal extends partial traces one edge at a
//! time. Each work item owns its trace and its loop-context stack (one
//! iteration counter per active loop, innermost on top). Entering a loop
//! pushes a zero counter; a return arc increments the top counter, dropping
//! the trace once the maximum bound would be exceeded; leaving a loop pops
//! its counter, dropping the trace if the minimum bound was not reached.
//! A trace whose loop has used up its iterations is also dropped as soon as
//! it can no longer leave that loop without another return arc.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cfg_model::AnalysisConfig;
use crate::error::{Error, Result};
use crate::tipsgraph::{EdgeKind, HeadMove, TipId, TipIdx, TipsGraph};
use crate::Cycles;

pub mod verify;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraceElement {
    pub tip: TipId,
    pub date: Cycles,
    /// Worst-case bus accesses of the tip, copied from the graph.
    pub mu: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace {
    pub elements: Vec<TraceElement>,
}

impl Trace {
    pub fn end_date(&self) -> Cycles {
        self.elements.last().map_or(0, |e| e.date)
    }

    /// Total worst-case accesses along the trace.
    pub fn total_accesses(&self) -> u64 {
        self.elements.iter().map(|e| e.mu).sum()
    }

    pub fn tips(&self) -> impl Iterator<Item = &TipId> {
        self.elements.iter().map(|e| &e.tip)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSet {
    pub task: String,
    /// Sorted by element sequence, without duplicates.
    pub traces: Vec<Trace>,
    pub d_max: Cycles,
}

impl TraceSet {
    pub fn new(task: impl Into<String>, traces: impl IntoIterator<Item = Trace>) -> TraceSet {
        let set: BTreeSet<Trace> = traces.into_iter().collect();
        let traces: Vec<Trace> = set.into_iter().collect();
        let d_max = traces.iter().map(Trace::end_date).max().unwrap_or(0);
        TraceSet {
            task: task.into(),
            traces,
            d_max,
        }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// `trace <n>: (tip,date) (tip,date) ...`, one line per trace.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (n, tr) in self.traces.iter().enumerate() {
            let _ = write!(s, "trace {n}:");
            for e in &tr.elements {
                let _ = write!(s, " ({},{})", e.tip, e.date);
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone)]
struct WorkItem {
    trace: Vec<TraceElement>,
    edge: usize,
    context: Vec<(TipIdx, u64)>,
}

pub fn enumerate_traces(tg: &TipsGraph, config: &AnalysisConfig) -> Result<TraceSet> {
    let limit = config.max_traces;
    let kinds: Vec<EdgeKind> = tg
        .edges()
        .iter()
        .map(|e| tg.edge_kind(e).expect("validated graph"))
        .collect();
    let element = |t: TipIdx, date: Cycles| TraceElement {
        tip: tg.tip(t).id.clone(),
        date,
        mu: tg.tip(t).mu,
    };

    let start = vec![element(tg.start(), 0)];
    let mut wl: Vec<WorkItem> = tg
        .out_edges(tg.start())
        .iter()
        .rev()
        .map(|&edge| WorkItem {
            trace: start.clone(),
            edge,
            context: Vec::new(),
        })
        .collect();
    let escape = escape_sets(tg, &kinds);
    let mut traces: BTreeSet<Trace> = BTreeSet::new();
    let explosion = || Error::Explosion {
        what: "trace enumeration",
        limit,
    };

    while let Some(WorkItem {
        mut trace,
        edge,
        mut context,
    }) = wl.pop()
    {
        let e = tg.edges()[edge];
        let kind = &kinds[edge];
        let last_date = trace.last().expect("traces start non-empty").date;

        if !apply_context(tg, kind, &mut context) {
            continue;
        }
        let meta = tg.loop_meta();
        if context
            .iter()
            .any(|&(h, it)| it == meta[&h].max_iter && !escape[&h][e.dst])
        {
            continue;
        }

        trace.push(element(e.dst, last_date + e.w));
        if e.dst == tg.end() {
            debug_assert!(context.is_empty());
            traces.insert(Trace { elements: trace });
            if traces.len() as u64 > limit {
                return Err(explosion());
            }
        } else {
            let succ = tg.out_edges(e.dst);
            // Pushed in reverse so the lowest edge is explored first.
            for (k, &next) in succ.iter().enumerate().rev() {
                let item = if k == 0 {
                    WorkItem {
                        trace: std::mem::take(&mut trace),
                        edge: next,
                        context: std::mem::take(&mut context),
                    }
                } else {
                    WorkItem {
                        trace: trace.clone(),
                        edge: next,
                        context: context.clone(),
                    }
                };
                wl.push(item);
            }
            if wl.len() as u64 > limit {
                return Err(explosion());
            }
        }
    }

    let set = TraceSet::new(tg.task(), traces);
    log::debug!("{}: {} traces, d_max {}", tg.task(), set.len(), set.d_max);
    Ok(set)
}

/// Updates the loop-context stack for one edge; false discards the trace.
/// Per loop head, the tips from which an exit of that loop is reachable
/// without taking one of its return arcs.
fn escape_sets(tg: &TipsGraph, kinds: &[EdgeKind]) -> BTreeMap<TipIdx, Vec<bool>> {
    let n = tg.tips().len();
    tg.loop_meta()
        .keys()
        .map(|&h| {
            let mut can = vec![false; n];
            let mut changed = true;
            while changed {
                changed = false;
                for (k, e) in tg.edges().iter().enumerate() {
                    if can[e.src] {
                        continue;
                    }
                    let kind = &kinds[k];
                    let leaves = kind.exited.contains(&h);
                    let hop = !leaves && kind.head != HeadMove::Return(h) && can[e.dst];
                    if leaves || hop {
                        can[e.src] = true;
                        changed = true;
                    }
                }
            }
            (h, can)
        })
        .collect()
}

fn apply_context(tg: &TipsGraph, kind: &EdgeKind, context: &mut Vec<(TipIdx, u64)>) -> bool {
    let meta = tg.loop_meta();
    for &l in &kind.exited {
        match context.pop() {
            Some((top, it)) if top == l => {
                if it < meta[&l].min_iter {
                    return false;
                }
            }
            _ => unreachable!("context stack out of sync with loop nest"),
        }
    }
    match kind.head {
        HeadMove::None => {}
        HeadMove::Enter(h) => context.push((h, 0)),
        HeadMove::Return(h) => {
            let top = context.last_mut().expect("return arc inside its loop");
            debug_assert_eq!(top.0, h);
            if top.1 == meta[&h].max_iter {
                return false;
            }
            top.1 += 1;
        }
    }
    true
}
