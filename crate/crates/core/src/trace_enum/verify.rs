//! Replays every concrete path of a task and checks that the enumerated
//! trace with the same TIP sequence never dates a TIP earlier than the
//! concrete run does.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::{Trace, TraceSet};
use crate::cfg_model::{AnalysisConfig, TaskCfg};
use crate::concrete::{Mode, Origin, Walker};
use crate::error::Result;
use crate::tipsgraph::verify::PATH_CAP;
use crate::tipsgraph::TipId;
use crate::Cycles;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConservativenessViolation {
    /// A concrete path whose TIP sequence matches no enumerated trace.
    MissingTrace { signature: Vec<TipId> },
    /// A concrete date later than the abstract worst-case date.
    LateDate {
        trace: usize,
        position: usize,
        tip: TipId,
        concrete: Cycles,
        bound: Cycles,
    },
}

impl fmt::Display for ConservativenessViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConservativenessViolation::MissingTrace { signature } => {
                write!(f, "no enumerated trace for concrete path [")?;
                for (k, t) in signature.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str("]")
            }
            ConservativenessViolation::LateDate {
                trace,
                position,
                tip,
                concrete,
                bound,
            } => write!(
                f,
                "trace {trace}, element {position} ({tip}): concrete date {concrete} > bound {bound}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConservativenessReport {
    pub concrete_paths: u64,
    /// Enumerated traces no concrete path maps to.
    pub unmatched_traces: usize,
    pub violations: Vec<ConservativenessViolation>,
}

impl ConservativenessReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Loops are unrolled up to `min(max_iter, unroll_limit)` iterations.
pub fn check_conservativeness(
    cfg: &TaskCfg,
    ts: &TraceSet,
    config: &AnalysisConfig,
    unroll_limit: u64,
) -> Result<ConservativenessReport> {
    let by_signature: HashMap<Vec<&TipId>, (usize, &Trace)> = ts
        .traces
        .iter()
        .enumerate()
        .map(|(k, tr)| (tr.tips().collect(), (k, tr)))
        .collect();
    let mut matched = vec![false; ts.traces.len()];
    let mut violations = Vec::new();

    let mut walker = Walker::new(
        cfg,
        config.access_time,
        Mode::FullPath,
        unroll_limit,
        PATH_CAP,
    );
    walker.walk(Origin::TaskEntry, &mut |points| {
        let signature: Vec<&TipId> = points.iter().map(|(t, _)| t).collect();
        let Some(&(k, tr)) = by_signature.get(&signature) else {
            violations.push(ConservativenessViolation::MissingTrace {
                signature: signature.into_iter().cloned().collect(),
            });
            return;
        };
        matched[k] = true;
        for (position, ((tip, concrete), e)) in points.iter().zip(&tr.elements).enumerate() {
            if *concrete > e.date {
                violations.push(ConservativenessViolation::LateDate {
                    trace: k,
                    position,
                    tip: tip.clone(),
                    concrete: *concrete,
                    bound: e.date,
                });
            }
        }
    })?;

    Ok(ConservativenessReport {
        concrete_paths: walker.paths(),
        unmatched_traces: matched.iter().filter(|m| !**m).count(),
        violations,
    })
}
