//! Brute-force check that every edge weight bounds every TIP-free concrete
//! path between its endpoints.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{TipId, TipsGraph};
use crate::cfg_model::{AnalysisConfig, TaskCfg};
use crate::concrete::{Mode, Origin, Walker};
use crate::error::Result;
use crate::Cycles;

/// Concrete paths explored per check before giving up.
pub const PATH_CAP: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeBoundViolation {
    /// Some concrete path is longer than the edge weight.
    Underestimate {
        src: TipId,
        dst: TipId,
        w: Cycles,
        path_cost: Cycles,
    },
    /// A concrete TIP-free path has no edge at all.
    MissingEdge {
        src: TipId,
        dst: TipId,
        path_cost: Cycles,
    },
    /// The graph has a tip the CFG does not define (or the reverse).
    TipMismatch { tip: TipId },
}

impl fmt::Display for EdgeBoundViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeBoundViolation::Underestimate {
                src,
                dst,
                w,
                path_cost,
            } => write!(
                f,
                "edge {src} -> {dst}: weight {w} < concrete path cost {path_cost}"
            ),
            EdgeBoundViolation::MissingEdge {
                src,
                dst,
                path_cost,
            } => write!(
                f,
                "no edge {src} -> {dst} for a concrete path of cost {path_cost}"
            ),
            EdgeBoundViolation::TipMismatch { tip: t } => {
                write!(f, "tip {t} differs between CFG and graph")
            }
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EdgeBoundReport {
    pub checked_paths: u64,
    pub violations: Vec<EdgeBoundViolation>,
}

impl EdgeBoundReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every edge of `tg` against the concrete TIP-free paths of `cfg`,
/// unrolling TIP-free loops up to `min(max_iter, unroll_limit)` iterations.
pub fn verify_edge_bounds(
    cfg: &TaskCfg,
    tg: &TipsGraph,
    config: &AnalysisConfig,
    unroll_limit: u64,
) -> Result<EdgeBoundReport> {
    let mut walker = Walker::new(
        cfg,
        config.access_time,
        Mode::NextTip,
        unroll_limit,
        PATH_CAP,
    );

    // Origins derived from the CFG alone.
    let mut origins: BTreeMap<TipId, Origin> = BTreeMap::new();
    origins.insert(TipId::start(), Origin::TaskEntry);
    for (b, bb) in cfg.blocks().iter().enumerate() {
        if cfg.loop_headed_by(b).is_some_and(|l| walker.tipped(l)) {
            origins.insert(TipId::head(&bb.id), Origin::LoopHead(b));
        }
        for (index, ins) in bb.instructions.iter().enumerate() {
            if ins.is_tip() {
                origins.insert(
                    TipId::access(&ins.id),
                    Origin::AfterAccess {
                        block: b,
                        index,
                        mu: ins.max_accesses,
                    },
                );
            }
        }
    }

    let mut report = EdgeBoundReport::default();
    let graph_tips: Vec<&TipId> = tg.tips().iter().map(|t| &t.id).collect();
    for id in origins.keys() {
        if !graph_tips.contains(&id) {
            report
                .violations
                .push(EdgeBoundViolation::TipMismatch { tip: id.clone() });
        }
    }
    for id in &graph_tips {
        if **id != TipId::end() && !origins.contains_key(*id) {
            report
                .violations
                .push(EdgeBoundViolation::TipMismatch { tip: (*id).clone() });
        }
    }

    for (src, origin) in origins {
        let mut worst: BTreeMap<TipId, Cycles> = BTreeMap::new();
        walker.walk(origin, &mut |points| {
            let (dst, cost) = points.last().expect("a walk records its stopping point");
            let w = worst.entry(dst.clone()).or_insert(0);
            *w = (*w).max(*cost);
        })?;
        let Some(s) = tg.find(&src) else { continue };
        for (dst, path_cost) in worst {
            match tg.find(&dst).and_then(|d| tg.edge(s, d)) {
                Some(e) if e.w >= path_cost => {}
                Some(e) => report.violations.push(EdgeBoundViolation::Underestimate {
                    src: src.clone(),
                    dst,
                    w: e.w,
                    path_cost,
                }),
                None => report.violations.push(EdgeBoundViolation::MissingEdge {
                    src: src.clone(),
                    dst,
                    path_cost,
                }),
            }
        }
    }
    report.checked_paths = walker.paths();
    Ok(report)
}
