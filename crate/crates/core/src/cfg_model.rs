//! Annotated task control-flow graphs and the analysis configuration.
//!
//! A task system document is a JSON tree with a `config` object and a list of
//! `tasks`. Loading it produces validated [`TaskCfg`]s: every structural
//! invariant the later stages rely on (reachability, natural loops forming a
//! forest, back edges covering every cycle) is checked here once.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::scheduler::Placement;
use crate::Cycles;

pub type BlockIdx = usize;
pub type LoopIdx = usize;

pub const DEFAULT_SCHEDULE_ITERATIONS: usize = 100;

/// Cache classification of an instruction, computed by an external analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemClass {
    AlwaysHit,
    NotClassified,
    NonMemory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    pub wcet: Cycles,
    pub mem_class: MemClass,
    #[serde(default)]
    pub max_accesses: u64,
}

impl Instruction {
    pub fn is_tip(&self) -> bool {
        self.mem_class == MemClass::NotClassified
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub id: String,
    pub instructions: Vec<Instruction>,
}

/// Sum of the instruction WCETs of a block.
pub fn block_wcet(block: &BasicBlock) -> Cycles {
    block.instructions.iter().map(|i| i.wcet).sum()
}

/// A natural loop, in block indices of its owning [`TaskCfg`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopInfo {
    pub header: BlockIdx,
    pub members: BTreeSet<BlockIdx>,
    pub back_edges: BTreeSet<(BlockIdx, BlockIdx)>,
    pub exit_edges: BTreeSet<(BlockIdx, BlockIdx)>,
    pub min_iter: u64,
    pub max_iter: u64,
}

impl LoopInfo {
    pub fn contains(&self, block: BlockIdx) -> bool {
        self.members.contains(&block)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub access_time: Cycles,
    pub delta: Cycles,
    pub max_traces: u64,
    pub bus_access_latency: Cycles,
    pub max_schedule_iterations: usize,
}

impl AnalysisConfig {
    pub fn new(access_time: Cycles, delta: Cycles, max_traces: u64) -> Self {
        AnalysisConfig {
            access_time,
            delta,
            max_traces,
            bus_access_latency: access_time,
            max_schedule_iterations: DEFAULT_SCHEDULE_ITERATIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("access_time", self.access_time),
            ("max_traces", self.max_traces),
            ("bus_access_latency", self.bus_access_latency),
            (
                "max_schedule_iterations",
                self.max_schedule_iterations as u64,
            ),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid("config", Violation::ConfigField(name)));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Document form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub access_time: Cycles,
    pub delta: Cycles,
    pub max_traces: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus_access_latency: Option<Cycles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_schedule_iterations: Option<usize>,
}

impl From<&ConfigDoc> for AnalysisConfig {
    fn from(doc: &ConfigDoc) -> Self {
        AnalysisConfig {
            access_time: doc.access_time,
            delta: doc.delta,
            max_traces: doc.max_traces,
            bus_access_latency: doc.bus_access_latency.unwrap_or(doc.access_time),
            max_schedule_iterations: doc
                .max_schedule_iterations
                .unwrap_or(DEFAULT_SCHEDULE_ITERATIONS),
        }
    }
}

impl From<&AnalysisConfig> for ConfigDoc {
    fn from(c: &AnalysisConfig) -> Self {
        ConfigDoc {
            access_time: c.access_time,
            delta: c.delta,
            max_traces: c.max_traces,
            bus_access_latency: Some(c.bus_access_latency),
            max_schedule_iterations: Some(c.max_schedule_iterations),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopDoc {
    pub header: String,
    pub members: Vec<String>,
    pub back_edges: Vec<(String, String)>,
    pub exit_edges: Vec<(String, String)>,
    #[serde(default)]
    pub min_iter: u64,
    pub max_iter: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDoc {
    pub name: String,
    pub entry: String,
    pub exit: String,
    pub blocks: Vec<BasicBlock>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub loops: Vec<LoopDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSystemDoc {
    pub config: ConfigDoc,
    pub tasks: Vec<TaskDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub placements: Vec<Placement>,
}

/// A validated task system.
#[derive(Debug, Clone)]
pub struct TaskSystem {
    pub config: AnalysisConfig,
    pub tasks: Vec<TaskCfg>,
    pub placements: Vec<Placement>,
}

impl TaskSystem {
    /// Declared placements, or one core per task when none are given.
    pub fn effective_placements(&self) -> Vec<Placement> {
        if self.placements.is_empty() {
            crate::scheduler::default_placements(self.tasks.iter().map(TaskCfg::name))
        } else {
            self.placements.clone()
        }
    }

    pub fn task(&self, name: &str) -> Option<&TaskCfg> {
        self.tasks.iter().find(|t| t.name() == name)
    }

    pub fn to_document(&self) -> TaskSystemDoc {
        TaskSystemDoc {
            config: ConfigDoc::from(&self.config),
            tasks: self.tasks.iter().map(TaskCfg::to_document).collect(),
            placements: self.placements.clone(),
        }
    }
}

/// Parses and validates a task system document.
pub fn load_task_system(text: &str) -> Result<TaskSystem> {
    let doc: TaskSystemDoc = serde_json::from_str(text)?;
    TaskSystem::from_document(&doc)
}

impl TaskSystem {
    pub fn from_document(doc: &TaskSystemDoc) -> Result<TaskSystem> {
        let config = AnalysisConfig::from(&doc.config);
        config.validate()?;
        if doc.tasks.is_empty() {
            return Err(Error::invalid("tasks", Violation::EmptyTaskSystem));
        }
        let mut names = BTreeSet::new();
        let mut tasks = Vec::with_capacity(doc.tasks.len());
        for t in &doc.tasks {
            if !names.insert(t.name.as_str()) {
                return Err(Error::invalid(&t.name, Violation::DuplicateId));
            }
            tasks.push(TaskCfg::from_document(t)?);
        }
        if !doc.placements.is_empty() {
            crate::scheduler::validate_placements(names.iter().copied(), &doc.placements)?;
        }
        Ok(TaskSystem {
            config,
            tasks,
            placements: doc.placements.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// Validated graph
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TaskCfg {
    name: String,
    blocks: Vec<BasicBlock>,
    edges: Vec<(BlockIdx, BlockIdx)>,
    entry: BlockIdx,
    exit: BlockIdx,
    loops: Vec<LoopInfo>,
    succs: Vec<Vec<BlockIdx>>,
    loop_by_header: Vec<Option<LoopIdx>>,
    loop_parent: Vec<Option<LoopIdx>>,
}

impl PartialEq for TaskCfg {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.blocks == other.blocks
            && self.entry == other.entry
            && self.exit == other.exit
            && self.edges.iter().collect::<BTreeSet<_>>()
                == other.edges.iter().collect::<BTreeSet<_>>()
            && self.loops == other.loops
    }
}

impl TaskCfg {
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn blocks(&self) -> &[BasicBlock] {
        &self.blocks
    }
    pub fn block(&self, b: BlockIdx) -> &BasicBlock {
        &self.blocks[b]
    }
    pub fn edges(&self) -> &[(BlockIdx, BlockIdx)] {
        &self.edges
    }
    pub fn entry(&self) -> BlockIdx {
        self.entry
    }
    pub fn exit(&self) -> BlockIdx {
        self.exit
    }
    pub fn loops(&self) -> &[LoopInfo] {
        &self.loops
    }
    pub fn successors(&self, b: BlockIdx) -> &[BlockIdx] {
        &self.succs[b]
    }
    /// The loop whose header is `b`, if any.
    pub fn loop_headed_by(&self, b: BlockIdx) -> Option<LoopIdx> {
        self.loop_by_header[b]
    }
    /// Immediately enclosing loop of loop `l`.
    pub fn loop_parent(&self, l: LoopIdx) -> Option<LoopIdx> {
        self.loop_parent[l]
    }

    /// Loops containing `b`, outermost first.
    pub fn loop_nest(&self, b: BlockIdx) -> Vec<LoopIdx> {
        let mut nest: Vec<LoopIdx> = (0..self.loops.len())
            .filter(|&l| self.loops[l].contains(b))
            .collect();
        nest.sort_by_key(|&l| std::cmp::Reverse(self.loops[l].members.len()));
        nest
    }

    pub fn from_document(doc: &TaskDoc) -> Result<TaskCfg> {
        let task = doc.name.as_str();
        if doc.blocks.is_empty() {
            return Err(Error::invalid(task, Violation::EmptyTask));
        }

        let mut index: HashMap<&str, BlockIdx> = HashMap::new();
        let mut instr_ids = BTreeSet::new();
        for (i, b) in doc.blocks.iter().enumerate() {
            if index.insert(b.id.as_str(), i).is_some() {
                return Err(Error::invalid(&b.id, Violation::DuplicateId));
            }
            if b.instructions.is_empty() {
                return Err(Error::invalid(&b.id, Violation::EmptyBlock));
            }
            for ins in &b.instructions {
                if !instr_ids.insert(ins.id.as_str()) {
                    return Err(Error::invalid(&ins.id, Violation::DuplicateId));
                }
                let ok = match ins.mem_class {
                    MemClass::AlwaysHit | MemClass::NonMemory => ins.max_accesses == 0,
                    MemClass::NotClassified => ins.max_accesses >= 1,
                };
                if !ok {
                    return Err(Error::invalid(&ins.id, Violation::AccessCountMismatch));
                }
            }
        }
        let lookup = |id: &str| -> Result<BlockIdx> {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::invalid(task, Violation::UnknownBlock(id.to_string())))
        };

        let entry = lookup(&doc.entry)?;
        let exit = lookup(&doc.exit)?;
        let n = doc.blocks.len();
        let mut edges = Vec::with_capacity(doc.edges.len());
        let mut edge_set = BTreeSet::new();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for (s, d) in &doc.edges {
            let (si, di) = (lookup(s)?, lookup(d)?);
            if !edge_set.insert((si, di)) {
                return Err(Error::invalid(
                    task,
                    Violation::DuplicateEdge(s.clone(), d.clone()),
                ));
            }
            edges.push((si, di));
            succs[si].push(di);
            preds[di].push(si);
        }

        let name_of = |b: BlockIdx| doc.blocks[b].id.clone();
        if !preds[entry].is_empty() {
            return Err(Error::invalid(
                name_of(entry),
                Violation::EntryHasPredecessor,
            ));
        }
        if !succs[exit].is_empty() {
            return Err(Error::invalid(name_of(exit), Violation::ExitHasSuccessor));
        }
        let fwd = reachable(entry, &succs);
        if let Some(b) = (0..n).find(|&b| !fwd[b]) {
            return Err(Error::invalid(name_of(b), Violation::Unreachable));
        }
        let bwd = reachable(exit, &preds);
        if let Some(b) = (0..n).find(|&b| !bwd[b]) {
            return Err(Error::invalid(name_of(b), Violation::CannotReachExit));
        }

        let mut loops = Vec::with_capacity(doc.loops.len());
        let mut loop_by_header = vec![None; n];
        for ld in &doc.loops {
            let info = build_loop(ld, &lookup, &edge_set, &succs, &name_of)?;
            if loop_by_header[info.header].is_some() {
                return Err(Error::invalid(&ld.header, Violation::DuplicateLoopHeader));
            }
            loop_by_header[info.header] = Some(loops.len());
            loops.push(info);
        }

        // Proper forest: members disjoint or nested.
        for a in 0..loops.len() {
            for b in a + 1..loops.len() {
                let (ma, mb) = (&loops[a].members, &loops[b].members);
                let disjoint = ma.is_disjoint(mb);
                if !(disjoint || ma.is_subset(mb) || mb.is_subset(ma)) {
                    return Err(Error::invalid(
                        name_of(loops[b].header),
                        Violation::LoopsOverlap(name_of(loops[a].header)),
                    ));
                }
            }
        }
        let loop_parent = (0..loops.len())
            .map(|l| {
                (0..loops.len())
                    .filter(|&o| o != l && loops[l].members.is_subset(&loops[o].members))
                    .min_by_key(|&o| loops[o].members.len())
            })
            .collect();

        // Every cycle must go through a declared back edge.
        let back: BTreeSet<(BlockIdx, BlockIdx)> = loops
            .iter()
            .flat_map(|l| l.back_edges.iter().copied())
            .collect();
        if let Some(b) = find_cycle(n, &edges, &back) {
            return Err(Error::invalid(name_of(b), Violation::IrreducibleCycle));
        }

        Ok(TaskCfg {
            name: doc.name.clone(),
            blocks: doc.blocks.clone(),
            edges,
            entry,
            exit,
            loops,
            succs,
            loop_by_header,
            loop_parent,
        })
    }

    pub fn to_document(&self) -> TaskDoc {
        let id = |b: BlockIdx| self.blocks[b].id.clone();
        let pair = |&(s, d): &(BlockIdx, BlockIdx)| (id(s), id(d));
        TaskDoc {
            name: self.name.clone(),
            entry: id(self.entry),
            exit: id(self.exit),
            blocks: self.blocks.clone(),
            edges: self.edges.iter().map(pair).collect(),
            loops: self
                .loops
                .iter()
                .map(|l| LoopDoc {
                    header: id(l.header),
                    members: l.members.iter().map(|&b| id(b)).collect(),
                    back_edges: l.back_edges.iter().map(pair).collect(),
                    exit_edges: l.exit_edges.iter().map(pair).collect(),
                    min_iter: l.min_iter,
                    max_iter: l.max_iter,
                })
                .collect(),
        }
    }
}

fn build_loop(
    ld: &LoopDoc,
    lookup: &impl Fn(&str) -> Result<BlockIdx>,
    edge_set: &BTreeSet<(BlockIdx, BlockIdx)>,
    succs: &[Vec<BlockIdx>],
    name_of: &impl Fn(BlockIdx) -> String,
) -> Result<LoopInfo> {
    let at = ld.header.as_str();
    let header = lookup(at)?;
    let members = ld
        .members
        .iter()
        .map(|m| lookup(m))
        .collect::<Result<BTreeSet<_>>>()?;
    if !members.contains(&header) {
        return Err(Error::invalid(at, Violation::HeaderNotMember));
    }
    if ld.max_iter == 0 {
        return Err(Error::invalid(at, Violation::ZeroMaxIter));
    }
    if ld.min_iter > ld.max_iter {
        return Err(Error::invalid(
            at,
            Violation::InvertedLoopBounds {
                min: ld.min_iter,
                max: ld.max_iter,
            },
        ));
    }

    let mut back_edges = BTreeSet::new();
    for (s, d) in &ld.back_edges {
        let e = (lookup(s)?, lookup(d)?);
        if !edge_set.contains(&e) || e.1 != header || !members.contains(&e.0) {
            return Err(Error::invalid(
                at,
                Violation::BadBackEdge(s.clone(), d.clone()),
            ));
        }
        back_edges.insert(e);
    }
    if back_edges.is_empty() {
        return Err(Error::invalid(at, Violation::NoBackEdge));
    }
    let mut exit_edges = BTreeSet::new();
    for (s, d) in &ld.exit_edges {
        let e = (lookup(s)?, lookup(d)?);
        if !edge_set.contains(&e) || !members.contains(&e.0) || members.contains(&e.1) {
            return Err(Error::invalid(
                at,
                Violation::BadExitEdge(s.clone(), d.clone()),
            ));
        }
        exit_edges.insert(e);
    }

    let actual_back: BTreeSet<_> = edge_set
        .iter()
        .copied()
        .filter(|&(s, d)| d == header && members.contains(&s))
        .collect();
    if actual_back != back_edges {
        return Err(Error::invalid(at, Violation::BackEdgesMismatch));
    }
    let actual_exit: BTreeSet<_> = edge_set
        .iter()
        .copied()
        .filter(|&(s, d)| members.contains(&s) && !members.contains(&d))
        .collect();
    if actual_exit != exit_edges {
        return Err(Error::invalid(at, Violation::ExitEdgesMismatch));
    }
    for &(s, d) in edge_set {
        if !members.contains(&s) && members.contains(&d) && d != header {
            return Err(Error::invalid(
                at,
                Violation::SideEntry(name_of(s), name_of(d)),
            ));
        }
    }

    // Natural loop: every member reaches a latch without leaving the loop or
    // passing through the header again.
    let latches: BTreeSet<BlockIdx> = back_edges.iter().map(|&(s, _)| s).collect();
    for &m in &members {
        let mut seen = BTreeSet::from([m]);
        let mut stack = vec![m];
        let mut ok = false;
        while let Some(b) = stack.pop() {
            if latches.contains(&b) {
                ok = true;
                break;
            }
            for &s in &succs[b] {
                if s != header && members.contains(&s) && seen.insert(s) {
                    stack.push(s);
                }
            }
        }
        if !ok {
            return Err(Error::invalid(at, Violation::NotNaturalLoop(name_of(m))));
        }
    }

    Ok(LoopInfo {
        header,
        members,
        back_edges,
        exit_edges,
        min_iter: ld.min_iter,
        max_iter: ld.max_iter,
    })
}

fn reachable(from: BlockIdx, adj: &[Vec<BlockIdx>]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(b) = stack.pop() {
        for &s in &adj[b] {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    seen
}

/// Returns a block on a cycle of `edges \ removed`, if one exists.
fn find_cycle(
    n: usize,
    edges: &[(BlockIdx, BlockIdx)],
    removed: &BTreeSet<(BlockIdx, BlockIdx)>,
) -> Option<BlockIdx> {
    let mut indeg = vec![0usize; n];
    let mut adj: BTreeMap<BlockIdx, Vec<BlockIdx>> = BTreeMap::new();
    for e in edges.iter().filter(|e| !removed.contains(e)) {
        indeg[e.1] += 1;
        adj.entry(e.0).or_default().push(e.1);
    }
    let mut ready: Vec<BlockIdx> = (0..n).filter(|&b| indeg[b] == 0).collect();
    let mut done = 0;
    while let Some(b) = ready.pop() {
        done += 1;
        for &s in adj.get(&b).map(Vec::as_slice).unwrap_or(&[]) {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push(s);
            }
        }
    }
    (done < n).then(|| (0..n).find(|&b| indeg[b] > 0).unwrap())
}
