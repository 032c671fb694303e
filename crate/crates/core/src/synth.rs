//! Random inputs for property and oracle tests.
//!
//! CFGs are generated from structured programs (sequences, two-way branches,
//! while and do-while loops, multi-level breaks), so they are reducible by
//! construction. Loop metadata is derived from the generated edges with the
//! natural-loop definition.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::cfg_model::{
    BasicBlock, ConfigDoc, Instruction, LoopDoc, MemClass, TaskDoc, TaskSystemDoc,
};
use crate::scheduler::Placement;
use crate::segments::{AccessMap, Segment, SegmentSequence, TraceId};
use crate::tipsgraph::TipId;
use crate::trace_enum::{Trace, TraceElement, TraceSet};
use crate::Cycles;

#[derive(Debug, Clone)]
pub struct CfgShape {
    pub max_blocks: usize,
    pub max_loops: usize,
    pub max_iter: u64,
    pub max_wcet: Cycles,
    pub max_mu: u64,
    /// Chance that an instruction is a TIP.
    pub tip_ratio: f64,
}

impl Default for CfgShape {
    fn default() -> Self {
        CfgShape {
            max_blocks: 8,
            max_loops: 2,
            max_iter: 3,
            max_wcet: 50,
            max_mu: 3,
            tip_ratio: 0.3,
        }
    }
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

struct LoopCtx {
    after: usize,
}

struct Gen<'a, R: Rng> {
    rng: &'a mut R,
    shape: &'a CfgShape,
    name: String,
    blocks: Vec<BasicBlock>,
    edges: Vec<(usize, usize)>,
    /// (header, min_iter, max_iter) of each loop, in creation order.
    loops: Vec<(usize, u64, u64)>,
}

impl<R: Rng> Gen<'_, R> {
    fn room(&self, n: usize) -> bool {
        // keep one block for the dedicated exit
        self.blocks.len() + n < self.shape.max_blocks
    }

    fn block(&mut self) -> usize {
        let b = self.blocks.len();
        let n = self.rng.gen_range(1..=3);
        let instructions = (0..n)
            .map(|k| {
                let wcet = self.rng.gen_range(0..=self.shape.max_wcet);
                let id = format!("{}.b{b}.i{k}", self.name);
                if self.rng.gen_bool(self.shape.tip_ratio) {
                    Instruction {
                        id,
                        wcet,
                        mem_class: MemClass::NotClassified,
                        max_accesses: self.rng.gen_range(1..=self.shape.max_mu),
                    }
                } else {
                    let mem_class = if self.rng.gen_bool(0.5) {
                        MemClass::AlwaysHit
                    } else {
                        MemClass::NonMemory
                    };
                    Instruction {
                        id,
                        wcet,
                        mem_class,
                        max_accesses: 0,
                    }
                }
            })
            .collect();
        self.blocks.push(BasicBlock {
            id: format!("b{b}"),
            instructions,
        });
        b
    }

    fn edge(&mut self, a: usize, b: usize) {
        debug_assert!(!self.edges.contains(&(a, b)));
        self.edges.push((a, b));
    }

    /// Generates a statement sequence continuing from block `cur`; returns
    /// the block control falls through to.
    fn seq(&mut self, mut cur: usize, depth: usize, ctx: &mut Vec<LoopCtx>) -> usize {
        let len = self.rng.gen_range(0..=2);
        for _ in 0..len {
            cur = self.stmt(cur, depth, ctx);
        }
        cur
    }

    fn bounds(&mut self) -> (u64, u64) {
        let max = self.rng.gen_range(1..=self.shape.max_iter);
        (self.rng.gen_range(0..=max), max)
    }

    fn stmt(&mut self, cur: usize, depth: usize, ctx: &mut Vec<LoopCtx>) -> usize {
        let can_loop = self.loops.len() < self.shape.max_loops && depth < 3;
        let choice = self.rng.gen_range(0..6);
        match choice {
            // if-then-else or if-then, optionally with a break in the then arm
            0 | 1 if self.room(3) => {
                let t = self.block();
                let j = self.block();
                let e = (self.rng.gen_bool(0.5) && self.room(1)).then(|| self.block());
                self.edge(cur, t);
                let join = if !ctx.is_empty() && self.rng.gen_bool(0.6) {
                    let level = self.rng.gen_range(0..ctx.len());
                    let target = ctx[ctx.len() - 1 - level].after;
                    self.edge(t, target);
                    None
                } else {
                    Some(self.seq(t, depth + 1, ctx))
                };
                match e {
                    Some(e) => {
                        self.edge(cur, e);
                        let e_end = self.seq(e, depth + 1, ctx);
                        self.edge(e_end, j);
                    }
                    None => self.edge(cur, j),
                }
                if let Some(t_end) = join {
                    self.edge(t_end, j);
                }
                j
            }
            // while loop: cur -> H, H -> body ... -> H, H -> A
            2 | 3 if can_loop && self.room(3) => {
                let h = self.block();
                let a = self.block();
                let b = self.block();
                let (min, max) = self.bounds();
                self.loops.push((h, min, max));
                self.edge(cur, h);
                self.edge(h, b);
                self.edge(h, a);
                ctx.push(LoopCtx { after: a });
                let latch = self.seq(b, depth + 1, ctx);
                ctx.pop();
                self.edge(latch, h);
                a
            }
            // do-while loop: cur -> H ... -> latch, latch -> H, latch -> A
            4 if can_loop && self.room(2) => {
                let h = self.block();
                let a = self.block();
                let (min, max) = self.bounds();
                self.loops.push((h, min, max));
                self.edge(cur, h);
                ctx.push(LoopCtx { after: a });
                let latch = self.seq(h, depth + 1, ctx);
                ctx.pop();
                self.edge(latch, h);
                self.edge(latch, a);
                a
            }
            _ if self.room(1) => {
                let n = self.block();
                self.edge(cur, n);
                n
            }
            _ => cur,
        }
    }

    fn finish(mut self) -> TaskDoc {
        let exit = self.block();
        let n = self.blocks.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            preds[b].push(a);
        }
        let id = |b: usize| format!("b{b}");
        let loops = self
            .loops
            .iter()
            .map(|&(h, min, max)| {
                let latches: Vec<usize> = self
                    .edges
                    .iter()
                    .filter(|&&(_, d)| d == h)
                    .map(|&(s, _)| s)
                    .filter(|&s| dominated_by(&self.edges, n, s, h))
                    .collect();
                let mut members = BTreeSet::from([h]);
                let mut stack = latches.clone();
                while let Some(b) = stack.pop() {
                    if members.insert(b) {
                        stack.extend(preds[b].iter().copied());
                    }
                }
                let exits: Vec<(String, String)> = self
                    .edges
                    .iter()
                    .filter(|(s, d)| members.contains(s) && !members.contains(d))
                    .map(|&(s, d)| (id(s), id(d)))
                    .collect();
                LoopDoc {
                    header: id(h),
                    members: members.iter().map(|&b| id(b)).collect(),
                    back_edges: latches.iter().map(|&s| (id(s), id(h))).collect(),
                    exit_edges: exits,
                    min_iter: min,
                    max_iter: max,
                }
            })
            .collect();
        let last = self.edges.iter().map(|e| e.0).collect::<BTreeSet<_>>();
        // every block without successors other than the exit falls into it
        let dangling: Vec<usize> = (0..exit).filter(|b| !last.contains(b)).collect();
        debug_assert!(dangling.is_empty(), "generator left dangling blocks");
        TaskDoc {
            name: self.name,
            entry: id(0),
            exit: id(exit),
            blocks: self.blocks,
            edges: self.edges.iter().map(|&(a, b)| (id(a), id(b))).collect(),
            loops,
        }
    }
}

/// Whether every path from block 0 to `b` passes through `d`.
fn dominated_by(edges: &[(usize, usize)], n: usize, b: usize, d: usize) -> bool {
    if b == d {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    while let Some(x) = stack.pop() {
        if x == d || seen[x] {
            continue;
        }
        if x == b {
            return false;
        }
        seen[x] = true;
        stack.extend(edges.iter().filter(|e| e.0 == x).map(|e| e.1));
    }
    true
}

/// A random structured task CFG.
pub fn random_task(rng: &mut impl Rng, name: &str, shape: &CfgShape) -> TaskDoc {
    let mut g = Gen {
        rng,
        shape,
        name: name.to_string(),
        blocks: Vec::new(),
        edges: Vec::new(),
        loops: Vec::new(),
    };
    let entry = g.block();
    let mut ctx = Vec::new();
    let mut cur = entry;
    // at least one statement so programs are not trivial
    for _ in 0..3 {
        cur = g.stmt(cur, 0, &mut ctx);
    }
    let last = g.blocks.len();
    g.edges.push((cur, last));
    g.finish()
}

pub fn random_system(
    rng: &mut impl Rng,
    tasks: usize,
    shape: &CfgShape,
    config: ConfigDoc,
) -> TaskSystemDoc {
    TaskSystemDoc {
        config,
        tasks: (0..tasks)
            .map(|k| random_task(rng, &format!("task{k}"), shape))
            .collect(),
        placements: Vec::new(),
    }
}

/// A random, well-formed trace set: dates increase and every access window
/// ends before the next element.
pub fn random_trace_set(rng: &mut impl Rng, max_traces: usize, access_time: Cycles) -> TraceSet {
    let n = rng.gen_range(1..=max_traces);
    let traces: Vec<Trace> = (0..n)
        .map(|_| {
            let mut elements = vec![TraceElement {
                tip: TipId::start(),
                date: 0,
                mu: 0,
            }];
            let mut t = 0;
            for k in 0..rng.gen_range(0..=5) {
                t += rng.gen_range(0..=40);
                let mu = rng.gen_range(1..=3);
                elements.push(TraceElement {
                    tip: TipId::access(&format!("i{k}")),
                    date: t,
                    mu,
                });
                t += mu * access_time;
            }
            t += rng.gen_range(0..=40);
            elements.push(TraceElement {
                tip: TipId::end(),
                date: t,
                mu: 0,
            });
            Trace { elements }
        })
        .collect();
    let mut ts = TraceSet::new("random", traces);
    if ts.d_max == 0 {
        // keep the horizon non-empty
        let last = ts.traces[0].elements.last_mut().unwrap();
        last.date = 1;
        ts = TraceSet::new("random", ts.traces);
    }
    ts
}

/// A random partition of `[0, d_max)` into segments of one trace.
pub fn random_profile(rng: &mut impl Rng, max_segments: usize, max_access: u64) -> SegmentSequence {
    let n = rng.gen_range(1..=max_segments);
    let mut segments = Vec::with_capacity(n);
    let mut t = 0;
    for _ in 0..n {
        let dur = rng.gen_range(1..=60);
        let mu: AccessMap = BTreeMap::from([(TraceId(0), rng.gen_range(0..=max_access))]);
        segments.push(Segment::new(t, dur, mu));
        t += dur;
    }
    SegmentSequence { segments, d_max: t }
}

/// A random scheduling problem: up to `max_tasks` profiles on up to
/// `max_cores` cores.
pub fn random_schedule_problem(
    rng: &mut impl Rng,
    max_tasks: usize,
    max_cores: usize,
) -> (BTreeMap<String, SegmentSequence>, Vec<Placement>) {
    let n = rng.gen_range(1..=max_tasks);
    let cores = rng.gen_range(1..=max_cores);
    let mut profiles = BTreeMap::new();
    let mut placements = Vec::new();
    for k in 0..n {
        let name = format!("task{k}");
        profiles.insert(name.clone(), random_profile(rng, 4, 4));
        placements.push(Placement {
            task: name,
            core: rng.gen_range(0..cores),
            release: rng.gen_range(0..=50),
        });
    }
    (profiles, placements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg_model::TaskCfg;

    #[test]
    fn generated_cfgs_validate() {
        let mut r = rng(7);
        for k in 0..500 {
            let doc = random_task(&mut r, "t", &CfgShape::default());
            if let Err(e) = TaskCfg::from_document(&doc) {
                panic!(
                    "case {k}: {e}\n{}",
                    serde_json::to_string_pretty(&doc).unwrap()
                );
            }
            assert!(doc.blocks.len() <= 8);
            assert!(doc.loops.len() <= 2);
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = random_task(&mut rng(3), "t", &CfgShape::default());
        let b = random_task(&mut rng(3), "t", &CfgShape::default());
        assert_eq!(a, b);
    }

    #[test]
    fn random_traces_are_valid() {
        let mut r = rng(1);
        for _ in 0..100 {
            let ts = random_trace_set(&mut r, 4, 10);
            assert!(ts.d_max > 0);
            for tr in &ts.traces {
                for w in tr.elements.windows(2) {
                    assert!(w[0].date + w[0].mu * 10 <= w[1].date);
                }
            }
        }
    }
}
