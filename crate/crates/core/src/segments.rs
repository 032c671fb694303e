//! Temporal segment profiles.
//!
//! Each trace is cut into alternating access windows and gaps; the per-trace
//! partitions of `[0, d_max)` are intersected into their common refinement,
//! and short segments are then fused until they reach a minimum length.
//! Every segment carries, per trace, an upper bound on the bus accesses that
//! trace can issue inside the segment's half-open window.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cfg_model::AnalysisConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::trace_enum::{Trace, TraceSet};
use crate::Cycles;

/// Position of a trace in its (sorted) [`TraceSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraceId(pub u32);

impl fmt::Display for TraceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

pub type AccessMap = BTreeMap<TraceId, u64>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Cycles,
    pub dur: Cycles,
    pub mu: AccessMap,
}

impl Segment {
    pub fn new(start: Cycles, dur: Cycles, mu: AccessMap) -> Segment {
        Segment { start, dur, mu }
    }

    pub fn end(&self) -> Cycles {
        self.start + self.dur
    }

    pub fn max_access(&self) -> u64 {
        self.mu.values().copied().max().unwrap_or(0)
    }

    pub fn overlaps(&self, start: Cycles, end: Cycles) -> bool {
        self.start < end && start < self.end()
    }
}

/// Key-wise union; a trace present in both maps keeps the larger bound.
fn union(a: &AccessMap, b: &AccessMap) -> AccessMap {
    let mut out = a.clone();
    for (&k, &v) in b {
        let e = out.entry(k).or_insert(0);
        *e = (*e).max(v);
    }
    out
}

/// Intersection of two segments' windows, or `None` when they are disjoint
/// (touching windows are disjoint).
pub fn segment_intersect(a: &Segment, b: &Segment) -> Option<Segment> {
    let mu = || union(&a.mu, &b.mu);
    if a.start >= b.end() || b.start >= a.end() {
        None
    } else if a.start >= b.start && b.end() >= a.end() {
        Some(Segment::new(a.start, a.dur, mu()))
    } else if a.start >= b.start && a.end() >= b.end() {
        Some(Segment::new(a.start, b.end() - a.start, mu()))
    } else if a.start < b.start && a.end() <= b.end() {
        Some(Segment::new(b.start, a.end() - b.start, mu()))
    } else {
        // a.start < b.start && a.end() > b.end()
        Some(Segment::new(b.start, b.dur, mu()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSequence {
    pub segments: Vec<Segment>,
    pub d_max: Cycles,
}

impl SegmentSequence {
    /// Checks ordering, positivity, start at 0 and coverage up to `d_max`.
    pub fn check_partition(&self) -> std::result::Result<(), String> {
        let Some(first) = self.segments.first() else {
            return if self.d_max == 0 {
                Ok(())
            } else {
                Err(format!("no segments but d_max = {}", self.d_max))
            };
        };
        if first.start != 0 {
            return Err(format!("first segment starts at {}", first.start));
        }
        for (k, s) in self.segments.iter().enumerate() {
            if s.dur == 0 {
                return Err(format!("segment {k} has zero duration"));
            }
            if s.mu.is_empty() {
                return Err(format!("segment {k} has an empty access map"));
            }
            if k > 0 && s.start < self.segments[k - 1].end() {
                return Err(format!("segment {k} overlaps its predecessor"));
            }
        }
        let end = self.segments.last().unwrap().end();
        if end != self.d_max {
            return Err(format!(
                "last segment ends at {end}, not d_max {}",
                self.d_max
            ));
        }
        Ok(())
    }

    /// Boundary dates (segment starts and ends).
    pub fn boundaries(&self) -> std::collections::BTreeSet<Cycles> {
        self.segments
            .iter()
            .flat_map(|s| [s.start, s.end()])
            .collect()
    }

    /// Per-trace sum of the access bounds over all segments.
    pub fn totals(&self) -> AccessMap {
        let mut out = AccessMap::new();
        for s in &self.segments {
            for (&k, &v) in &s.mu {
                *out.entry(k).or_insert(0) += v;
            }
        }
        out
    }
}

/// Cuts one trace into an access window and a gap per element, the last gap
/// reaching `d_max`. Zero-length segments are dropped.
pub fn segments_of_trace(
    tr: &Trace,
    id: TraceId,
    d_max: Cycles,
    config: &AnalysisConfig,
) -> Result<SegmentSequence> {
    let els = &tr.elements;
    if tr.end_date() > d_max {
        return Err(Error::HorizonMismatch(tr.end_date(), d_max));
    }
    let mut segments = Vec::with_capacity(2 * els.len());
    let mut push = |start: Cycles, dur: Cycles, mu: u64| {
        if dur > 0 {
            segments.push(Segment::new(start, dur, AccessMap::from([(id, mu)])));
        }
    };
    let n = els.len();
    for k in 0..n.saturating_sub(1) {
        let e = &els[k];
        let acc_end = e.date + e.mu * config.access_time;
        let next = if k + 2 == n { d_max } else { els[k + 1].date };
        if els[k + 1].date < acc_end {
            return Err(Error::NegativeGap {
                tip: e.tip.to_string(),
                access_end: acc_end,
                next: els[k + 1].date,
            });
        }
        push(e.date, acc_end - e.date, e.mu);
        push(acc_end, next - acc_end, 0);
    }
    if n == 1 {
        push(0, d_max, 0);
    }
    Ok(SegmentSequence { segments, d_max })
}

/// Common refinement of two partitions of the same horizon.
pub fn sequence_intersection(p: &SegmentSequence, q: &SegmentSequence) -> Result<SegmentSequence> {
    if p.d_max != q.d_max {
        return Err(Error::HorizonMismatch(p.d_max, q.d_max));
    }
    Ok(refine_pair(p, q))
}

fn refine_pair(p: &SegmentSequence, q: &SegmentSequence) -> SegmentSequence {
    let (a, b) = (&p.segments, &q.segments);
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if let Some(s) = segment_intersect(&a[i], &b[j]) {
            out.push(s);
        }
        match a[i].end().cmp(&b[j].end()) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    SegmentSequence {
        segments: out,
        d_max: p.d_max,
    }
}

/// Greedy left-to-right fusion. Zero-access segments of at least `delta`
/// cycles are kept as they are; every other run of consecutive segments is
/// merged until it spans `delta` cycles, a kept segment follows, or the input
/// ends. Access maps are summed trace by trace.
pub fn fusion(s: &SegmentSequence, delta: Cycles) -> SegmentSequence {
    let mut out = Vec::with_capacity(s.segments.len());
    let mut run: Option<Segment> = None;
    for seg in &s.segments {
        if seg.max_access() == 0 && seg.dur >= delta {
            out.extend(run.take());
            out.push(seg.clone());
            continue;
        }
        let acc = match run.take() {
            None => seg.clone(),
            Some(mut acc) => {
                acc.dur = seg.end() - acc.start;
                for (&k, &v) in &seg.mu {
                    *acc.mu.entry(k).or_insert(0) += v;
                }
                acc
            }
        };
        if acc.dur >= delta {
            out.push(acc);
        } else {
            run = Some(acc);
        }
    }
    out.extend(run);
    SegmentSequence {
        segments: out,
        d_max: s.d_max,
    }
}

/// Per-trace segmentations of `traces` intersected in the given order.
pub fn refine_traces(
    traces: &[(TraceId, &Trace)],
    d_max: Cycles,
    config: &AnalysisConfig,
    exec: Execution,
) -> Result<SegmentSequence> {
    let per_trace = exec
        .map(traces, |(id, tr)| segments_of_trace(tr, *id, d_max, config))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(exec
        .reduce(per_trace, |p, q| refine_pair(&p, &q))
        .unwrap_or(SegmentSequence {
            segments: Vec::new(),
            d_max,
        }))
}

fn ids(ts: &TraceSet) -> Vec<(TraceId, &Trace)> {
    ts.traces
        .iter()
        .enumerate()
        .map(|(k, tr)| (TraceId(k as u32), tr))
        .collect()
}

/// The task's common refinement before fusion.
pub fn refine_task(
    ts: &TraceSet,
    config: &AnalysisConfig,
    exec: Execution,
) -> Result<SegmentSequence> {
    refine_traces(&ids(ts), ts.d_max, config, exec)
}

/// The task's segment profile: refinement of every trace, then fusion.
pub fn segments_for_task(
    ts: &TraceSet,
    config: &AnalysisConfig,
    exec: Execution,
) -> Result<SegmentSequence> {
    Ok(fusion(&refine_task(ts, config, exec)?, config.delta))
}

/// Largest sum of `max_access` over the segments overlapping any window of
/// `window` cycles inside `[0, d_max)`. Windows longer than `d_max` are
/// clamped to it.
pub fn window_access_bound(s: &SegmentSequence, window: Cycles) -> u64 {
    let w = window.min(s.d_max);
    if w == 0 {
        return 0;
    }
    let last = s.d_max - w;
    // Overlap with [a, a + w) holds for integer a in [start + 1 - w, end - 1];
    // the optimum sits at one of those left ends (or at 0).
    let mut candidates: Vec<Cycles> = vec![0];
    candidates.extend(
        s.segments
            .iter()
            .filter_map(|seg| (seg.start + 1).checked_sub(w))
            .filter(|&a| a <= last),
    );
    candidates
        .into_iter()
        .map(|a| {
            s.segments
                .iter()
                .filter(|seg| seg.overlaps(a, a + w))
                .map(Segment::max_access)
                .sum()
        })
        .max()
        .unwrap_or(0)
}

/// A broken profile invariant found by [`replay_check`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SegmentViolation {
    pub segment: Option<usize>,
    pub trace: Option<TraceId>,
    pub message: String,
}

impl fmt::Display for SegmentViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = self.segment {
            write!(f, "segment {s}: ")?;
        }
        if let Some(t) = self.trace {
            write!(f, "trace {t}: ")?;
        }
        f.write_str(&self.message)
    }
}

/// Replays every trace against the final profile: partition invariants,
/// per-trace conservativeness of every segment, and preservation of per-trace
/// totals by fusion (`refined` is the pre-fusion sequence).
pub fn replay_check(
    ts: &TraceSet,
    refined: &SegmentSequence,
    fused: &SegmentSequence,
    config: &AnalysisConfig,
) -> Vec<SegmentViolation> {
    let mut out = Vec::new();
    for (label, seq) in [("refined", refined), ("fused", fused)] {
        if let Err(e) = seq.check_partition() {
            out.push(SegmentViolation {
                segment: None,
                trace: None,
                message: format!("{label} sequence: {e}"),
            });
        }
        if seq.d_max != ts.d_max {
            out.push(SegmentViolation {
                segment: None,
                trace: None,
                message: format!(
                    "{label} sequence horizon {} != d_max {}",
                    seq.d_max, ts.d_max
                ),
            });
        }
    }
    for (k, tr) in ts.traces.iter().enumerate() {
        let id = TraceId(k as u32);
        for (si, seg) in fused.segments.iter().enumerate() {
            let accesses: u64 = tr
                .elements
                .iter()
                .filter(|e| e.mu > 0 && seg.overlaps(e.date, e.date + e.mu * config.access_time))
                .map(|e| e.mu)
                .sum();
            let bound = seg.mu.get(&id).copied();
            if bound.unwrap_or(0) < accesses {
                out.push(SegmentViolation {
                    segment: Some(si),
                    trace: Some(id),
                    message: format!("bound {bound:?} below {accesses} overlapping accesses"),
                });
            }
        }
    }
    if refined.totals() != fused.totals() {
        out.push(SegmentViolation {
            segment: None,
            trace: None,
            message: "fusion changed per-trace access totals".into(),
        });
    }
    out
}
