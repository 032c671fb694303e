//! TIP-centred abstraction of a task CFG.
//!
//! A time interest point (TIP) is an instruction whose data access may reach
//! the shared bus. The TIPsGraph keeps only those points (plus synthetic
//! start, end and loop-header points) and labels every edge with an upper
//! bound on the time between the two points along any TIP-free concrete path.
//!
//! Timing model: an instruction first spends its `wcet`; a TIP then spends
//! `mu * access_time` on the bus. A TIP's date is the instant its access
//! begins. A loop-head point sits at the start of its header block. Edge
//! weights therefore cover the source's bus window, every instruction in
//! between, and the destination's own `wcet`.
//!
//! Loops without any TIP are collapsed: a traversal costs
//! `max_iter * (longest iteration) + (longest exit pass)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::rc::Rc;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cfg_model::{block_wcet, AnalysisConfig, BlockIdx, Instruction, LoopIdx, TaskCfg};
use crate::error::{Error, Result, Violation};
use crate::Cycles;

pub mod verify;

pub type TipIdx = usize;

/// Stable, human-readable TIP identifier: `start`, `end`, `head:<block>` or
/// `tip:<instruction>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TipId(Arc<str>);

impl TipId {
    pub fn start() -> Self {
        TipId("start".into())
    }
    pub fn end() -> Self {
        TipId("end".into())
    }
    pub fn head(block: &str) -> Self {
        TipId(format!("head:{block}").into())
    }
    pub fn access(instr: &str) -> Self {
        TipId(format!("tip:{instr}").into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TipId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipKind {
    Start,
    End,
    LoopHead,
    Access,
}

impl TipKind {
    fn as_str(self) -> &'static str {
        match self {
            TipKind::Start => "start",
            TipKind::End => "end",
            TipKind::LoopHead => "loop_head",
            TipKind::Access => "access",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tip {
    pub id: TipId,
    pub kind: TipKind,
    pub mu: u64,
    /// Instruction id for access tips.
    pub instr: Option<String>,
    /// Enclosing loop-head tips, outermost first. A loop-head tip lists
    /// itself last.
    pub loops: Vec<TipIdx>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TgEdge {
    pub src: TipIdx,
    pub dst: TipIdx,
    pub w: Cycles,
}

pub type EdgeSet = BTreeSet<(TipIdx, TipIdx)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopMeta {
    pub min_iter: u64,
    pub max_iter: u64,
    pub return_edges: EdgeSet,
    pub exit_edges: EdgeSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "TipsGraphDoc", try_from = "TipsGraphDoc")]
pub struct TipsGraph {
    task: String,
    tips: Vec<Tip>,
    edges: Vec<TgEdge>,
    loop_meta: BTreeMap<TipIdx, LoopMeta>,
    out: Vec<Vec<usize>>,
}

impl TipsGraph {
    pub fn task(&self) -> &str {
        &self.task
    }
    pub fn tips(&self) -> &[Tip] {
        &self.tips
    }
    pub fn tip(&self, t: TipIdx) -> &Tip {
        &self.tips[t]
    }
    pub fn edges(&self) -> &[TgEdge] {
        &self.edges
    }
    pub fn loop_meta(&self) -> &BTreeMap<TipIdx, LoopMeta> {
        &self.loop_meta
    }
    pub fn start(&self) -> TipIdx {
        0
    }
    pub fn end(&self) -> TipIdx {
        self.tips.len() - 1
    }
    /// Outgoing edges of `t`, sorted by destination.
    pub fn outgoing(&self, t: TipIdx) -> impl Iterator<Item = &TgEdge> {
        self.out[t].iter().map(move |&e| &self.edges[e])
    }
    /// Indices into [`TipsGraph::edges`] of the edges leaving `t`.
    pub fn out_edges(&self, t: TipIdx) -> &[usize] {
        &self.out[t]
    }
    pub fn find(&self, id: &TipId) -> Option<TipIdx> {
        self.tips.iter().position(|t| &t.id == id)
    }
    pub fn edge(&self, src: TipIdx, dst: TipIdx) -> Option<&TgEdge> {
        self.outgoing(src).find(|e| e.dst == dst)
    }

    /// Overwrites the weight of an existing edge. Used by mutation tests and
    /// external tooling that tightens bounds.
    pub fn set_weight(&mut self, src: TipIdx, dst: TipIdx, w: Cycles) -> bool {
        match self.edges.iter_mut().find(|e| e.src == src && e.dst == dst) {
            Some(e) => {
                e.w = w;
                true
            }
            None => false,
        }
    }

    /// Graph description text: `tip <id> <kind> <mu>` and `edge <src> <dst> <w>`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tips {
            let _ = writeln!(s, "tip {} {} {}", t.id, t.kind.as_str(), t.mu);
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "edge {} {} {}",
                self.tips[e.src].id, self.tips[e.dst].id, e.w
            );
        }
        s
    }

    fn from_parts(
        task: String,
        tips: Vec<Tip>,
        mut edges: Vec<TgEdge>,
        loop_meta: BTreeMap<TipIdx, LoopMeta>,
    ) -> Result<TipsGraph> {
        edges.sort();
        let mut out = vec![Vec::new(); tips.len()];
        for (k, e) in edges.iter().enumerate() {
            out[e.src].push(k);
        }
        let g = TipsGraph {
            task,
            tips,
            edges,
            loop_meta,
            out,
        };
        g.check()?;
        Ok(g)
    }

    fn bad(&self, why: String) -> Error {
        Error::invalid(&self.task, Violation::BadArtifact(why))
    }

    /// Structural invariants.
    fn check(&self) -> Result<()> {
        let n = self.tips.len();
        if n < 2 || self.tips[0].kind != TipKind::Start || self.tips[n - 1].kind != TipKind::End {
            return Err(self.bad("tip list must begin with start and end with end".into()));
        }
        let mut seen = BTreeSet::new();
        for (k, t) in self.tips.iter().enumerate() {
            if !seen.insert(&t.id) {
                return Err(self.bad(format!("duplicate tip id {}", t.id)));
            }
            let ok = match t.kind {
                TipKind::Start | TipKind::End => (k == 0 || k == n - 1) && t.mu == 0,
                TipKind::LoopHead => {
                    t.mu == 0 && t.loops.last() == Some(&k) && self.loop_meta.contains_key(&k)
                }
                TipKind::Access => t.mu >= 1,
            };
            if !ok {
                return Err(self.bad(format!("tip {} violates its kind invariants", t.id)));
            }
            if t.loops
                .iter()
                .any(|&l| l >= n || self.tips[l].kind != TipKind::LoopHead)
            {
                return Err(self.bad(format!("tip {} references a non loop-head", t.id)));
            }
            let chained = t
                .loops
                .iter()
                .enumerate()
                .all(|(depth, &l)| self.tips[l].loops[..] == t.loops[..=depth]);
            if !chained {
                return Err(self.bad(format!("loop nest of {} is not a chain", t.id)));
            }
        }
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(self.bad("edge endpoint out of range".into()));
            }
            if e.dst == 0 || e.src == n - 1 {
                return Err(self.bad("start has no incoming, end no outgoing edges".into()));
            }
            if self.edge_kind(e).is_none() {
                return Err(self.bad(format!(
                    "edge {} -> {} moves between loop nests illegally",
                    self.tips[e.src].id, self.tips[e.dst].id
                )));
            }
        }
        for w in self.edges.windows(2) {
            if (w[0].src, w[0].dst) == (w[1].src, w[1].dst) {
                return Err(self.bad("parallel edges must be merged".into()));
            }
        }
        for (&h, meta) in &self.loop_meta {
            if self.tips.get(h).map(|t| t.kind) != Some(TipKind::LoopHead) {
                return Err(self.bad("loop metadata on a non loop-head".into()));
            }
            if meta.min_iter > meta.max_iter || meta.max_iter == 0 {
                return Err(self.bad(format!("bad iteration bounds at {}", self.tips[h].id)));
            }
            let (ret, exit) = self.classify_loop_edges(h);
            if ret != meta.return_edges || exit != meta.exit_edges {
                return Err(self.bad(format!(
                    "return/exit edges of {} inconsistent with loop nests",
                    self.tips[h].id
                )));
            }
        }

        let fwd = self.reach(0, false);
        let bwd = self.reach(n - 1, true);
        if let Some(t) = (0..n).find(|&t| !(fwd[t] && bwd[t])) {
            return Err(Error::UnreachableTip(self.tips[t].id.to_string()));
        }
        Ok(())
    }

    fn reach(&self, from: TipIdx, backward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.tips.len()];
        seen[from] = true;
        let mut stack = vec![from];
        while let Some(t) = stack.pop() {
            for e in &self.edges {
                let (a, b) = if backward {
                    (e.dst, e.src)
                } else {
                    (e.src, e.dst)
                };
                if a == t && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen
    }

    fn classify_loop_edges(&self, h: TipIdx) -> (EdgeSet, EdgeSet) {
        let mut ret = BTreeSet::new();
        let mut exit = BTreeSet::new();
        for e in &self.edges {
            let inside_src = self.tips[e.src].loops.contains(&h);
            let inside_dst = self.tips[e.dst].loops.contains(&h);
            if inside_src && e.dst == h {
                ret.insert((e.src, e.dst));
            } else if inside_src && !inside_dst {
                exit.insert((e.src, e.dst));
            }
        }
        (ret, exit)
    }

    /// How an edge moves through the loop nest, or `None` if it is not a
    /// legal move (entering a loop anywhere but its head).
    pub fn edge_kind(&self, e: &TgEdge) -> Option<EdgeKind> {
        let s = &self.tips[e.src].loops;
        let d = &self.tips[e.dst].loops;
        let common = s.iter().zip(d.iter()).take_while(|(a, b)| a == b).count();
        let exited: Vec<TipIdx> = s[common..].iter().rev().copied().collect();
        let is_head = self.tips[e.dst].kind == TipKind::LoopHead;
        if is_head && s.contains(&e.dst) {
            // Return arc: destination nest is the source nest cut at the head.
            if common == d.len() && d.last() == Some(&e.dst) {
                return Some(EdgeKind {
                    exited,
                    head: HeadMove::Return(e.dst),
                });
            }
            return None;
        }
        if is_head {
            if common + 1 == d.len() && d.last() == Some(&e.dst) {
                return Some(EdgeKind {
                    exited,
                    head: HeadMove::Enter(e.dst),
                });
            }
            return None;
        }
        (common == d.len()).then_some(EdgeKind {
            exited,
            head: HeadMove::None,
        })
    }
}

/// Loop-context effect of traversing one TIPsGraph edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeKind {
    /// Loop heads left by the edge, innermost first.
    pub exited: Vec<TipIdx>,
    pub head: HeadMove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMove {
    None,
    Enter(TipIdx),
    Return(TipIdx),
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// TIP instructions of the task, in block order then program order.
pub fn extract_tips(cfg: &TaskCfg) -> Vec<(BlockIdx, &Instruction)> {
    cfg.blocks()
        .iter()
        .enumerate()
        .flat_map(|(b, bb)| {
            bb.instructions
                .iter()
                .filter(|i| i.is_tip())
                .map(move |i| (b, i))
        })
        .collect()
}

pub fn build_tipsgraph(cfg: &TaskCfg, config: &AnalysisConfig) -> Result<TipsGraph> {
    Builder::new(cfg, config.access_time).build()
}

type Costs = BTreeMap<TipIdx, Cycles>;
type ExitCosts = BTreeMap<(BlockIdx, BlockIdx), Cycles>;

fn merge_max<K: Ord + Copy>(
    into: &mut BTreeMap<K, Cycles>,
    from: &BTreeMap<K, Cycles>,
    add: Cycles,
) {
    for (&k, &c) in from {
        let v = into.entry(k).or_insert(0);
        *v = (*v).max(c + add);
    }
}

struct Builder<'a> {
    cfg: &'a TaskCfg,
    access_time: Cycles,
    tipped: Vec<bool>,
    tips: Vec<Tip>,
    head_tip: Vec<Option<TipIdx>>,
    access_tip: Vec<Vec<Option<TipIdx>>>,
    collapsed_header: Vec<Option<LoopIdx>>,
    region_memo: HashMap<BlockIdx, Rc<Costs>>,
    summary_memo: HashMap<LoopIdx, Rc<ExitCosts>>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum InLoop {
    Latch,
    Exit(BlockIdx, BlockIdx),
}

impl<'a> Builder<'a> {
    fn new(cfg: &'a TaskCfg, access_time: Cycles) -> Self {
        let tipped: Vec<bool> = cfg
            .loops()
            .iter()
            .map(|l| {
                l.members
                    .iter()
                    .any(|&b| cfg.block(b).instructions.iter().any(Instruction::is_tip))
            })
            .collect();

        let n = cfg.blocks().len();
        let mut tips = vec![Tip {
            id: TipId::start(),
            kind: TipKind::Start,
            mu: 0,
            instr: None,
            loops: vec![],
        }];
        let mut head_tip = vec![None; n];
        let mut access_tip: Vec<Vec<Option<TipIdx>>> = Vec::with_capacity(n);
        for (b, bb) in cfg.blocks().iter().enumerate() {
            if cfg.loop_headed_by(b).is_some_and(|l| tipped[l]) {
                head_tip[b] = Some(tips.len());
                tips.push(Tip {
                    id: TipId::head(&bb.id),
                    kind: TipKind::LoopHead,
                    mu: 0,
                    instr: None,
                    loops: vec![],
                });
            }
            access_tip.push(
                bb.instructions
                    .iter()
                    .map(|ins| {
                        ins.is_tip().then(|| {
                            tips.push(Tip {
                                id: TipId::access(&ins.id),
                                kind: TipKind::Access,
                                mu: ins.max_accesses,
                                instr: Some(ins.id.clone()),
                                loops: vec![],
                            });
                            tips.len() - 1
                        })
                    })
                    .collect(),
            );
        }
        tips.push(Tip {
            id: TipId::end(),
            kind: TipKind::End,
            mu: 0,
            instr: None,
            loops: vec![],
        });

        // Loop nests of every tip, in loop-head tip indices.
        let nest_of = |b: BlockIdx| -> Vec<TipIdx> {
            cfg.loop_nest(b)
                .into_iter()
                .filter(|&l| tipped[l])
                .map(|l| head_tip[cfg.loops()[l].header].expect("tipped loop has a head tip"))
                .collect()
        };
        for b in 0..n {
            let nest = nest_of(b);
            if let Some(h) = head_tip[b] {
                tips[h].loops = nest.clone();
            }
            for t in access_tip[b].iter().flatten() {
                tips[*t].loops = nest.clone();
            }
        }

        let collapsed_header = (0..n)
            .map(|b| {
                cfg.loop_headed_by(b)
                    .filter(|&l| !tipped[l] && cfg.loop_parent(l).is_none_or(|p| tipped[p]))
            })
            .collect();

        Builder {
            cfg,
            access_time,
            tipped,
            tips,
            head_tip,
            access_tip,
            collapsed_header,
            region_memo: HashMap::new(),
            summary_memo: HashMap::new(),
        }
    }

    fn end(&self) -> TipIdx {
        self.tips.len() - 1
    }

    /// Costs from executing block `b` starting at instruction `k` to the
    /// first TIP point reached along each path.
    fn costs_from(&mut self, b: BlockIdx, k: usize) -> Costs {
        let cfg = self.cfg;
        let mut acc = 0;
        for (j, ins) in cfg.block(b).instructions.iter().enumerate().skip(k) {
            acc += ins.wcet;
            if let Some(t) = self.access_tip[b][j] {
                return Costs::from([(t, acc)]);
            }
        }
        if b == cfg.exit() {
            return Costs::from([(self.end(), acc)]);
        }
        let mut out = Costs::new();
        for &z in cfg.successors(b) {
            let r = self.region(z);
            merge_max(&mut out, &r, acc);
        }
        out
    }

    /// Costs from entering block `z` to the first TIP point on each path.
    fn region(&mut self, z: BlockIdx) -> Rc<Costs> {
        if let Some(c) = self.region_memo.get(&z) {
            return c.clone();
        }
        let costs = if let Some(h) = self.head_tip[z] {
            Costs::from([(h, 0)])
        } else if let Some(l) = self.collapsed_header[z] {
            let summary = self.summary(l);
            let mut out = Costs::new();
            for (&(_, y), &c) in summary.iter() {
                let r = self.region(y);
                merge_max(&mut out, &r, c);
            }
            out
        } else {
            self.costs_from(z, 0)
        };
        let rc = Rc::new(costs);
        self.region_memo.insert(z, rc.clone());
        rc
    }

    /// Worst cost of a complete traversal of TIP-free loop `l`, per exit edge,
    /// measured from entering its header to leaving the exit edge's source.
    fn summary(&mut self, l: LoopIdx) -> Rc<ExitCosts> {
        if let Some(s) = self.summary_memo.get(&l) {
            return s.clone();
        }
        debug_assert!(!self.tipped[l]);
        let info = &self.cfg.loops()[l];
        let header = info.header;
        let mut memo: HashMap<BlockIdx, BTreeMap<InLoop, Cycles>> = HashMap::new();
        let pass = self.loop_block(l, header, &mut memo);

        let iteration = pass.get(&InLoop::Latch).copied().unwrap_or(0);
        let max_iter = info.max_iter;
        let summary: ExitCosts = pass
            .iter()
            .filter_map(|(t, &c)| match *t {
                InLoop::Exit(x, y) => Some(((x, y), max_iter * iteration + c)),
                InLoop::Latch => None,
            })
            .collect();
        let rc = Rc::new(summary);
        self.summary_memo.insert(l, rc.clone());
        rc
    }

    /// One pass through loop `l` from entering `b`: costs to the latch
    /// (any back edge of `l`) and to each exit edge of `l`.
    fn loop_block(
        &mut self,
        l: LoopIdx,
        b: BlockIdx,
        memo: &mut HashMap<BlockIdx, BTreeMap<InLoop, Cycles>>,
    ) -> BTreeMap<InLoop, Cycles> {
        if let Some(r) = memo.get(&b) {
            return r.clone();
        }
        let cfg = self.cfg;
        let info = &cfg.loops()[l];
        let mut out = BTreeMap::new();
        let child = cfg.loop_headed_by(b).filter(|&c| c != l);
        let leaving: Vec<((BlockIdx, BlockIdx), Cycles)> = match child {
            Some(c) => self.summary(c).iter().map(|(&e, &c)| (e, c)).collect(),
            None => {
                let acc = block_wcet(cfg.block(b));
                cfg.successors(b).iter().map(|&z| ((b, z), acc)).collect()
            }
        };
        for ((x, y), c) in leaving {
            if y == info.header {
                merge_max(&mut out, &BTreeMap::from([(InLoop::Latch, 0)]), c);
            } else if !info.contains(y) {
                merge_max(&mut out, &BTreeMap::from([(InLoop::Exit(x, y), 0)]), c);
            } else {
                let r = self.loop_block(l, y, memo);
                merge_max(&mut out, &r, c);
            }
        }
        memo.insert(b, out.clone());
        out
    }

    fn build(mut self) -> Result<TipsGraph> {
        let cfg = self.cfg;
        let mut edges = Vec::new();
        let mut push = |src: TipIdx, base: Cycles, costs: &Costs| {
            for (&dst, &c) in costs {
                edges.push(TgEdge {
                    src,
                    dst,
                    w: base + c,
                });
            }
        };

        let entry = self.region(cfg.entry());
        push(0, 0, &entry);
        for b in 0..cfg.blocks().len() {
            if let Some(h) = self.head_tip[b] {
                let costs = self.costs_from(b, 0);
                push(h, 0, &costs);
            }
            for j in 0..cfg.block(b).instructions.len() {
                if let Some(t) = self.access_tip[b][j] {
                    let base = self.tips[t].mu * self.access_time;
                    let costs = self.costs_from(b, j + 1);
                    push(t, base, &costs);
                }
            }
        }

        // Loop metadata from the nests.
        let mut loop_meta = BTreeMap::new();
        for (l, info) in cfg.loops().iter().enumerate() {
            if !self.tipped[l] {
                continue;
            }
            let h = self.head_tip[info.header].unwrap();
            let mut ret = BTreeSet::new();
            let mut exit = BTreeSet::new();
            for e in &edges {
                let inside_src = self.tips[e.src].loops.contains(&h);
                let inside_dst = self.tips[e.dst].loops.contains(&h);
                if inside_src && e.dst == h {
                    ret.insert((e.src, e.dst));
                } else if inside_src && !inside_dst {
                    exit.insert((e.src, e.dst));
                }
            }
            loop_meta.insert(
                h,
                LoopMeta {
                    min_iter: info.min_iter,
                    max_iter: info.max_iter,
                    return_edges: ret,
                    exit_edges: exit,
                },
            );
        }

        let tips = std::mem::take(&mut self.tips);
        TipsGraph::from_parts(cfg.name().to_string(), tips, edges, loop_meta)
    }
}

// ---------------------------------------------------------------------------
// Serialized form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TipDoc {
    id: TipId,
    kind: TipKind,
    mu: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instr: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    loops: Vec<TipId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    src: TipId,
    dst: TipId,
    w: Cycles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoopMetaDoc {
    head: TipId,
    min_iter: u64,
    max_iter: u64,
    return_edges: Vec<(TipId, TipId)>,
    exit_edges: Vec<(TipId, TipId)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TipsGraphDoc {
    task: String,
    tips: Vec<TipDoc>,
    edges: Vec<EdgeDoc>,
    loops: Vec<LoopMetaDoc>,
}

impl From<TipsGraph> for TipsGraphDoc {
    fn from(g: TipsGraph) -> Self {
        let id = |t: TipIdx| g.tips[t].id.clone();
        let pairs =
            |s: &BTreeSet<(TipIdx, TipIdx)>| s.iter().map(|&(a, b)| (id(a), id(b))).collect();
        TipsGraphDoc {
            task: g.task.clone(),
            tips: g
                .tips
                .iter()
                .map(|t| TipDoc {
                    id: t.id.clone(),
                    kind: t.kind,
                    mu: t.mu,
                    instr: t.instr.clone(),
                    loops: t.loops.iter().map(|&l| id(l)).collect(),
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|e| EdgeDoc {
                    src: id(e.src),
                    dst: id(e.dst),
                    w: e.w,
                })
                .collect(),
            loops: g
                .loop_meta
                .iter()
                .map(|(&h, m)| LoopMetaDoc {
                    head: id(h),
                    min_iter: m.min_iter,
                    max_iter: m.max_iter,
                    return_edges: pairs(&m.return_edges),
                    exit_edges: pairs(&m.exit_edges),
                })
                .collect(),
        }
    }
}

impl TryFrom<TipsGraphDoc> for TipsGraph {
    type Error = Error;

    fn try_from(doc: TipsGraphDoc) -> Result<Self> {
        let bad = |why: String| Error::invalid(&doc.task, Violation::BadArtifact(why));
        let index: HashMap<&TipId, TipIdx> = doc
            .tips
            .iter()
            .enumerate()
            .map(|(k, t)| (&t.id, k))
            .collect();
        let look = |id: &TipId| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| bad(format!("unknown tip {id}")))
        };
        let tips = doc
            .tips
            .iter()
            .map(|t| {
                Ok(Tip {
                    id: t.id.clone(),
                    kind: t.kind,
                    mu: t.mu,
                    instr: t.instr.clone(),
                    loops: t.loops.iter().map(look).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = doc
            .edges
            .iter()
            .map(|e| {
                Ok(TgEdge {
                    src: look(&e.src)?,
                    dst: look(&e.dst)?,
                    w: e.w,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pairs = |v: &[(TipId, TipId)]| -> Result<BTreeSet<(TipIdx, TipIdx)>> {
            v.iter().map(|(a, b)| Ok((look(a)?, look(b)?))).collect()
        };
        let mut loop_meta = BTreeMap::new();
        for m in &doc.loops {
            loop_meta.insert(
                look(&m.head)?,
                LoopMeta {
                    min_iter: m.min_iter,
                    max_iter: m.max_iter,
                    return_edges: pairs(&m.return_edges)?,
                    exit_edges: pairs(&m.exit_edges)?,
                },
            );
        }
        TipsGraph::from_parts(doc.task.clone(), tips, edges, loop_meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg_model::{BasicBlock, LoopDoc, MemClass, TaskDoc};

    fn nm(id: &str, wcet: u64) -> Instruction {
        Instruction {
            id: id.into(),
            wcet,
            mem_class: MemClass::NonMemory,
            max_accesses: 0,
        }
    }
    fn nc(id: &str, wcet: u64, mu: u64) -> Instruction {
        Instruction {
            id: id.into(),
            wcet,
            mem_class: MemClass::NotClassified,
            max_accesses: mu,
        }
    }
    fn bb(id: &str, ins: Vec<Instruction>) -> BasicBlock {
        BasicBlock {
            id: id.into(),
            instructions: ins,
        }
    }
    fn edges(e: &[(&str, &str)]) -> Vec<(String, String)> {
        e.iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }
    fn cfg(blocks: Vec<BasicBlock>, e: &[(&str, &str)], loops: Vec<LoopDoc>) -> TaskCfg {
        TaskCfg::from_document(&TaskDoc {
            name: "t".into(),
            entry: blocks[0].id.clone(),
            exit: blocks.last().unwrap().id.clone(),
            blocks,
            edges: edges(e),
            loops,
        })
        .unwrap()
    }
    fn weight(g: &TipsGraph, s: &TipId, d: &TipId) -> Cycles {
        g.edge(g.find(s).unwrap(), g.find(d).unwrap()).unwrap().w
    }
    fn config() -> AnalysisConfig {
        AnalysisConfig::new(10, 0, 1000)
    }

    #[test]
    fn no_tips_means_single_edge() {
        let c = cfg(
            vec![
                bb("A", vec![nm("a", 3), nm("b", 4)]),
                bb("B", vec![nm("c", 2)]),
            ],
            &[("A", "B")],
            vec![],
        );
        assert!(extract_tips(&c).is_empty());
        let g = build_tipsgraph(&c, &config()).unwrap();
        assert_eq!(g.tips().len(), 2);
        assert_eq!(
            g.edges(),
            &[TgEdge {
                src: 0,
                dst: 1,
                w: 9
            }]
        );
    }

    #[test]
    fn tips_in_one_block_keep_order() {
        let c = cfg(
            vec![bb("A", vec![nc("x", 1, 1), nm("m", 2), nc("y", 3, 2)])],
            &[],
            vec![],
        );
        let t = extract_tips(&c);
        assert_eq!(
            t.iter().map(|(_, i)| i.id.as_str()).collect::<Vec<_>>(),
            ["x", "y"]
        );
        let g = build_tipsgraph(&c, &config()).unwrap();
        let (x, y) = (TipId::access("x"), TipId::access("y"));
        assert_eq!(weight(&g, &TipId::start(), &x), 1);
        assert_eq!(weight(&g, &x, &y), 10 + 2 + 3);
        assert_eq!(weight(&g, &y, &TipId::end()), 20);
    }

    #[test]
    fn straight_line_weights() {
        let c = cfg(
            vec![bb(
                "A",
                vec![
                    nm("a", 5),
                    nc("b", 0, 1),
                    nm("c", 678),
                    nc("d", 0, 1),
                    nm("e", 4),
                ],
            )],
            &[],
            vec![],
        );
        let g = build_tipsgraph(&c, &config()).unwrap();
        let (b, d) = (TipId::access("b"), TipId::access("d"));
        assert_eq!(weight(&g, &TipId::start(), &b), 5);
        assert_eq!(weight(&g, &b, &d), 688);
        assert_eq!(weight(&g, &d, &TipId::end()), 14);
    }

    #[test]
    fn diamond_takes_the_longer_branch() {
        let c = cfg(
            vec![
                bb("A", vec![nc("t1", 0, 1)]),
                bb("L", vec![nm("l", 10)]),
                bb("R", vec![nm("r", 25)]),
                bb("J", vec![nc("t2", 0, 1)]),
            ],
            &[("A", "L"), ("A", "R"), ("L", "J"), ("R", "J")],
            vec![],
        );
        let g = build_tipsgraph(&c, &config()).unwrap();
        assert_eq!(
            weight(&g, &TipId::access("t1"), &TipId::access("t2")),
            10 + 25
        );
        assert_eq!(g.edges().len(), 3);
    }

    #[test]
    fn tip_free_loop_is_collapsed() {
        // pre 2, header 1 + body 6 = 7 per iteration, max 3; final header
        // pass 1 + post 3 = 4.
        let c = cfg(
            vec![
                bb("P", vec![nm("p", 2)]),
                bb("H", vec![nm("h", 1)]),
                bb("B", vec![nm("b", 6)]),
                bb("Q", vec![nm("q", 3), nc("t", 0, 1)]),
            ],
            &[("P", "H"), ("H", "B"), ("B", "H"), ("H", "Q")],
            vec![LoopDoc {
                header: "H".into(),
                members: vec!["H".into(), "B".into()],
                back_edges: vec![("B".into(), "H".into())],
                exit_edges: vec![("H".into(), "Q".into())],
                min_iter: 0,
                max_iter: 3,
            }],
        );
        let g = build_tipsgraph(&c, &config()).unwrap();
        assert_eq!(weight(&g, &TipId::start(), &TipId::access("t")), 27);
        assert!(g.loop_meta().is_empty());
        assert!(g.tips().iter().all(|t| t.kind != TipKind::LoopHead));
    }

    #[test]
    fn tipped_loop_gets_a_head() {
        let c = cfg(
            vec![
                bb("E", vec![nm("e", 1)]),
                bb("H", vec![nm("h", 2)]),
                bb("B", vec![nm("b0", 1), nc("x", 1, 2), nm("b1", 3)]),
                bb("X", vec![nm("z", 4)]),
            ],
            &[("E", "H"), ("H", "B"), ("B", "H"), ("H", "X")],
            vec![LoopDoc {
                header: "H".into(),
                members: vec!["H".into(), "B".into()],
                back_edges: vec![("B".into(), "H".into())],
                exit_edges: vec![("H".into(), "X".into())],
                min_iter: 1,
                max_iter: 4,
            }],
        );
        let g = build_tipsgraph(&c, &config()).unwrap();
        let (h, x) = (TipId::head("H"), TipId::access("x"));
        assert_eq!(weight(&g, &TipId::start(), &h), 1);
        assert_eq!(weight(&g, &h, &x), 2 + 1 + 1);
        assert_eq!(weight(&g, &x, &h), 20 + 3);
        assert_eq!(weight(&g, &h, &TipId::end()), 2 + 4);
        let hi = g.find(&h).unwrap();
        let meta = &g.loop_meta()[&hi];
        assert_eq!((meta.min_iter, meta.max_iter), (1, 4));
        assert_eq!(meta.return_edges.len(), 1);
        assert_eq!(meta.exit_edges.len(), 1);
    }

    #[test]
    fn deterministic_and_serializable() {
        let c = cfg(
            vec![
                bb("E", vec![nm("e", 1)]),
                bb("H", vec![nc("h", 2, 1)]),
                bb("X", vec![nm("z", 4)]),
            ],
            &[("E", "H"), ("H", "H"), ("H", "X")],
            vec![LoopDoc {
                header: "H".into(),
                members: vec!["H".into()],
                back_edges: vec![("H".into(), "H".into())],
                exit_edges: vec![("H".into(), "X".into())],
                min_iter: 0,
                max_iter: 2,
            }],
        );
        let a = build_tipsgraph(&c, &config()).unwrap();
        let b = build_tipsgraph(&c, &config()).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        let back: TipsGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
        // head before the access tip of the same block
        assert_eq!(a.tip(1).kind, TipKind::LoopHead);
        assert_eq!(a.tip(2).kind, TipKind::Access);
        assert!(a.to_text().contains("edge tip:h head:H 10\n"));
    }

    #[test]
    fn corrupted_artifact_rejected() {
        let c = cfg(vec![bb("A", vec![nc("x", 1, 1)])], &[], vec![]);
        let g = build_tipsgraph(&c, &config()).unwrap();
        let mut v = serde_json::to_value(&g).unwrap();
        v["edges"].as_array_mut().unwrap().pop();
        assert!(serde_json::from_value::<TipsGraph>(v).is_err());
    }
}
