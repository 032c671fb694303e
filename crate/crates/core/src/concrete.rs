//! Brute-force enumeration of concrete CFG paths.
//!
//! This walker is the reference the abstraction is checked against. It works
//! directly on blocks and instructions, unrolls loops explicitly, and shares
//! nothing with the TIPsGraph construction apart from the TIP identifiers.

use crate::cfg_model::{BlockIdx, LoopIdx, TaskCfg};
use crate::error::{Error, Result};
use crate::tipsgraph::TipId;
use crate::Cycles;

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    /// Stop at the first TIP point; only TIP-free loops are bounded.
    NextTip,
    /// Run from task entry to exit, every loop bounded.
    FullPath,
}

/// Callback receiving the recorded (point, date) sequence of a path.
pub(crate) type Visit<'v> = dyn FnMut(&[(TipId, Cycles)]) + 'v;

pub(crate) struct Walker<'a> {
    cfg: &'a TaskCfg,
    access_time: Cycles,
    tipped: Vec<bool>,
    /// Per loop, the blocks that reach an exit without a back edge.
    escape: Vec<Vec<bool>>,
    mode: Mode,
    unroll_limit: u64,
    max_paths: u64,
    paths: u64,
}

/// Where a walk begins.
pub(crate) enum Origin {
    /// Entering the entry block at date 0.
    TaskEntry,
    /// Just after a TIP instruction: its bus window is charged first.
    AfterAccess {
        block: BlockIdx,
        index: usize,
        mu: u64,
    },
    /// At the start of a tipped loop header (the head point itself is not
    /// recorded again).
    LoopHead(BlockIdx),
}

impl<'a> Walker<'a> {
    pub(crate) fn new(
        cfg: &'a TaskCfg,
        access_time: Cycles,
        mode: Mode,
        unroll_limit: u64,
        max_paths: u64,
    ) -> Self {
        let tipped = cfg
            .loops()
            .iter()
            .map(|l| {
                l.members
                    .iter()
                    .any(|&b| cfg.block(b).instructions.iter().any(|i| i.is_tip()))
            })
            .collect();
        let escape = cfg
            .loops()
            .iter()
            .map(|l| escape_blocks(cfg, l.header))
            .collect();
        Walker {
            cfg,
            access_time,
            tipped,
            escape,
            mode,
            unroll_limit,
            max_paths,
            paths: 0,
        }
    }

    pub(crate) fn paths(&self) -> u64 {
        self.paths
    }

    pub(crate) fn tipped(&self, l: LoopIdx) -> bool {
        self.tipped[l]
    }

    fn tracked(&self, l: LoopIdx) -> bool {
        match self.mode {
            Mode::FullPath => true,
            Mode::NextTip => !self.tipped[l],
        }
    }

    /// Enumerates paths from `origin`, calling `visit` with the recorded
    /// (point, date) sequence of each complete path.
    pub(crate) fn walk(&mut self, origin: Origin, visit: &mut Visit) -> Result<()> {
        let mut points = Vec::new();
        let mut stack = Vec::new();
        match origin {
            Origin::TaskEntry => {
                if self.mode == Mode::FullPath {
                    points.push((TipId::start(), 0));
                }
                self.enter(self.cfg.entry(), 0, &mut stack, &mut points, visit)
            }
            Origin::AfterAccess { block, index, mu } => self.run(
                block,
                index + 1,
                mu * self.access_time,
                &mut stack,
                &mut points,
                visit,
            ),
            Origin::LoopHead(h) => {
                // Walking within an already-entered tipped loop: nothing to
                // track for it in NextTip mode.
                self.run(h, 0, 0, &mut stack, &mut points, visit)
            }
        }
    }

    fn emit(&mut self, points: &[(TipId, Cycles)], visit: &mut Visit) -> Result<()> {
        self.paths += 1;
        if self.paths > self.max_paths {
            return Err(Error::Explosion {
                what: "concrete path enumeration",
                limit: self.max_paths,
            });
        }
        visit(points);
        Ok(())
    }

    fn enter(
        &mut self,
        z: BlockIdx,
        t: Cycles,
        stack: &mut Vec<(LoopIdx, u64)>,
        points: &mut Vec<(TipId, Cycles)>,
        visit: &mut Visit,
    ) -> Result<()> {
        let cfg = self.cfg;
        if let Some(l) = cfg.loop_headed_by(z) {
            if self.tipped[l] {
                points.push((TipId::head(&cfg.block(z).id), t));
                if self.mode == Mode::NextTip {
                    self.emit(points, visit)?;
                    points.pop();
                    return Ok(());
                }
                let r = self.run(z, 0, t, stack, points, visit);
                points.pop();
                return r;
            }
        }
        self.run(z, 0, t, stack, points, visit)
    }

    fn run(
        &mut self,
        b: BlockIdx,
        k: usize,
        mut t: Cycles,
        stack: &mut Vec<(LoopIdx, u64)>,
        points: &mut Vec<(TipId, Cycles)>,
        visit: &mut Visit,
    ) -> Result<()> {
        let cfg = self.cfg;
        let mark = points.len();
        for ins in &cfg.block(b).instructions[k..] {
            t += ins.wcet;
            if ins.is_tip() {
                points.push((TipId::access(&ins.id), t));
                if self.mode == Mode::NextTip {
                    let r = self.emit(points, visit);
                    points.truncate(mark);
                    return r;
                }
                t += ins.max_accesses * self.access_time;
            }
        }
        if b == cfg.exit() {
            points.push((TipId::end(), t));
            let r = self.emit(points, visit);
            points.truncate(mark);
            return r;
        }
        for &z in cfg.successors(b) {
            let saved = stack.clone();
            if self.step(stack, z) && !self.stuck(stack, z) {
                self.enter(z, t, stack, points, visit)?;
            }
            *stack = saved;
        }
        points.truncate(mark);
        Ok(())
    }

    /// True when some loop on the stack has no iterations left and `z` can
    /// only continue through its back edges.
    fn stuck(&self, stack: &[(LoopIdx, u64)], z: BlockIdx) -> bool {
        let loops = self.cfg.loops();
        stack.iter().any(|&(l, count)| {
            count >= loops[l].max_iter.min(self.unroll_limit) && !self.escape[l][z]
        })
    }

    /// Loop bookkeeping for a control transfer into `z`. Returns false when
    /// the transfer violates an iteration bound.
    fn step(&self, stack: &mut Vec<(LoopIdx, u64)>, z: BlockIdx) -> bool {
        let loops = self.cfg.loops();
        while let Some(&(l, count)) = stack.last() {
            if loops[l].contains(z) {
                break;
            }
            if count < loops[l].min_iter {
                return false;
            }
            stack.pop();
        }
        if let Some(l) = self.cfg.loop_headed_by(z) {
            if !self.tracked(l) {
                return true;
            }
            match stack.last_mut() {
                Some((top, count)) if *top == l => {
                    let cap = loops[l].max_iter.min(self.unroll_limit);
                    if *count >= cap {
                        return false;
                    }
                    *count += 1;
                }
                _ => stack.push((l, 0)),
            }
        }
        true
    }
}

fn escape_blocks(cfg: &TaskCfg, header: BlockIdx) -> Vec<bool> {
    let l = cfg.loop_headed_by(header).expect("loop header");
    let body = &cfg.loops()[l];
    let mut can = vec![false; cfg.blocks().len()];
    let mut changed = true;
    while changed {
        changed = false;
        for &b in &body.members {
            if can[b] {
                continue;
            }
            let out = cfg
                .successors(b)
                .iter()
                .any(|&z| !body.contains(z) || (z != header && can[z]));
            if out {
                can[b] = true;
                changed = true;
            }
        }
    }
    can
}
