//! Partitioned static scheduling of segment profiles with bus interference.
//!
//! Each task runs on one core from its release date; tasks sharing a core run
//! back to back in (release, name) order. A segment suffers, from every
//! overlapping segment on another core, `min(max_access, max_access') ×
//! bus_access_latency` cycles of interference. In inflate mode segments grow
//! by their interference and the layout is recomputed until it is stable; the
//! later segments of a task shift rigidly by the inflation of the earlier
//! ones. In budget mode the layout is left untouched and the interference of
//! each task is charged against a per-task budget.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cfg_model::AnalysisConfig;
use crate::error::{Error, Result, Violation};
use crate::segments::SegmentSequence;
use crate::Cycles;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub task: String,
    pub core: usize,
    #[serde(default)]
    pub release: Cycles,
}

/// One core per task in name order, all released at 0.
pub fn default_placements<'a>(tasks: impl IntoIterator<Item = &'a str>) -> Vec<Placement> {
    let names: BTreeSet<&str> = tasks.into_iter().collect();
    names
        .into_iter()
        .enumerate()
        .map(|(core, task)| Placement {
            task: task.to_string(),
            core,
            release: 0,
        })
        .collect()
}

/// Exactly one placement per task and none for unknown tasks.
pub fn validate_placements<'a>(
    tasks: impl IntoIterator<Item = &'a str>,
    placements: &[Placement],
) -> Result<()> {
    let names: BTreeSet<&str> = tasks.into_iter().collect();
    let mut seen = BTreeSet::new();
    for p in placements {
        if !names.contains(p.task.as_str()) {
            return Err(Error::invalid(
                "placements",
                Violation::Placement(format!("unknown task `{}`", p.task)),
            ));
        }
        if !seen.insert(p.task.as_str()) {
            return Err(Error::invalid(
                "placements",
                Violation::Placement(format!("task `{}` placed twice", p.task)),
            ));
        }
    }
    if let Some(missing) = names.difference(&seen).next() {
        return Err(Error::invalid(
            "placements",
            Violation::Placement(format!("task `{missing}` has no placement")),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScheduleMode {
    Inflate,
    Budget { budget: Cycles },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledSegment {
    pub task: String,
    pub core: usize,
    /// Position within the task's profile.
    pub index: usize,
    /// Start within the profile, before any inflation.
    pub offset: Cycles,
    pub start: Cycles,
    pub dur: Cycles,
    pub base_dur: Cycles,
    pub max_access: u64,
    pub inflation: Cycles,
    /// Interference bound on the final layout.
    pub interference: Cycles,
}

impl ScheduledSegment {
    pub fn end(&self) -> Cycles {
        self.start + self.dur
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overrun {
    pub task: String,
    pub interference: Cycles,
    pub budget: Cycles,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub mode: ScheduleMode,
    pub bus_access_latency: Cycles,
    pub placements: Vec<Placement>,
    /// Per core, ordered by start date.
    pub cores: Vec<Vec<ScheduledSegment>>,
    pub makespan: Cycles,
    pub interference_total: Cycles,
    pub iterations: usize,
    pub overruns: Vec<Overrun>,
}

impl Schedule {
    pub fn segments(&self) -> impl Iterator<Item = &ScheduledSegment> {
        self.cores.iter().flatten()
    }

    /// Segments of one task in profile order.
    pub fn task_segments(&self, task: &str) -> Vec<&ScheduledSegment> {
        let mut v: Vec<_> = self.segments().filter(|s| s.task == task).collect();
        v.sort_by_key(|s| s.index);
        v
    }

    /// Per-core listing: `core <c>: <task>[<i>] start=<s> dur=<d> inflation=<x>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (c, segs) in self.cores.iter().enumerate() {
            for s in segs {
                out.push_str(&format!(
                    "core {c}: {}[{}] start={} dur={} inflation={}\n",
                    s.task, s.index, s.start, s.dur, s.inflation
                ));
            }
        }
        out.push_str(&format!(
            "makespan {} interference {}\n",
            self.makespan, self.interference_total
        ));
        for o in &self.overruns {
            out.push_str(&format!(
                "overrun {}: interference {} > budget {}\n",
                o.task, o.interference, o.budget
            ));
        }
        out
    }
}

/// Static description of one task's profile on its core.
struct Job<'a> {
    task: &'a str,
    core: usize,
    release: Cycles,
    profile: &'a SegmentSequence,
    /// Index of the first segment in the flat segment vector.
    first: usize,
}

/// Dates of every segment for the given inflations. Jobs are listed in
/// per-core (release, name) order.
fn layout(jobs: &[Job], inflation: &[Cycles]) -> Vec<Cycles> {
    let mut starts = vec![0; inflation.len()];
    let mut core_free: BTreeMap<usize, Cycles> = BTreeMap::new();
    for job in jobs {
        let origin = job
            .release
            .max(core_free.get(&job.core).copied().unwrap_or(0));
        let mut shift = 0;
        let mut end = origin + job.profile.d_max;
        for (k, seg) in job.profile.segments.iter().enumerate() {
            let i = job.first + k;
            starts[i] = origin + seg.start + shift;
            shift += inflation[i];
            end = end.max(starts[i] + seg.dur + inflation[i]);
        }
        core_free.insert(job.core, end.max(origin + job.profile.d_max + shift));
    }
    starts
}

/// Interference of every segment given (core, start, dur, max_access).
fn interference(segs: &[(usize, Cycles, Cycles, u64)], latency: Cycles) -> Vec<Cycles> {
    segs.iter()
        .map(|&(core, start, dur, acc)| {
            segs.iter()
                .filter(|&&(c, s, d, _)| c != core && s < start + dur && start < s + d)
                .map(|&(_, _, _, acc2)| acc.min(acc2) * latency)
                .sum()
        })
        .collect()
}

pub fn build_schedule(
    profiles: &BTreeMap<String, SegmentSequence>,
    placements: &[Placement],
    config: &AnalysisConfig,
    mode: ScheduleMode,
) -> Result<Schedule> {
    if profiles.is_empty() {
        return Err(Error::invalid("profiles", Violation::EmptyTaskSystem));
    }
    validate_placements(profiles.keys().map(String::as_str), placements)?;
    for (task, p) in profiles {
        p.check_partition()
            .map_err(|e| Error::invalid(task, Violation::BadArtifact(e)))?;
    }

    let mut order: Vec<&Placement> = placements.iter().collect();
    order.sort_by(|a, b| (a.core, a.release, &a.task).cmp(&(b.core, b.release, &b.task)));
    let mut jobs = Vec::with_capacity(order.len());
    let mut n = 0;
    for p in order {
        let profile = &profiles[&p.task];
        jobs.push(Job {
            task: &p.task,
            core: p.core,
            release: p.release,
            profile,
            first: n,
        });
        n += profile.segments.len();
    }
    let base: Vec<(usize, Cycles, u64)> = jobs
        .iter()
        .flat_map(|j| {
            j.profile
                .segments
                .iter()
                .map(|s| (j.core, s.dur, s.max_access()))
        })
        .collect();
    let latency = config.bus_access_latency;
    let snapshot = |infl: &[Cycles]| -> Vec<(usize, Cycles, Cycles, u64)> {
        let starts = layout(&jobs, infl);
        base.iter()
            .zip(starts)
            .zip(infl)
            .map(|((&(c, d, a), s), &x)| (c, s, d + x, a))
            .collect()
    };

    let mut inflation = vec![0; n];
    let mut iterations = 0;
    if mode == ScheduleMode::Inflate {
        loop {
            if iterations == config.max_schedule_iterations {
                return Err(Error::NonConvergence(iterations));
            }
            iterations += 1;
            let next = interference(&snapshot(&inflation), latency);
            if next == inflation {
                break;
            }
            inflation = next;
        }
    }
    let final_layout = snapshot(&inflation);
    let interf = interference(&final_layout, latency);
    log::debug!("schedule of {n} segments after {iterations} passes");

    let n_cores = placements.iter().map(|p| p.core + 1).max().unwrap_or(0);
    let mut cores: Vec<Vec<ScheduledSegment>> = vec![Vec::new(); n_cores];
    for job in &jobs {
        for (k, seg) in job.profile.segments.iter().enumerate() {
            let i = job.first + k;
            cores[job.core].push(ScheduledSegment {
                task: job.task.to_string(),
                core: job.core,
                index: k,
                offset: seg.start,
                start: final_layout[i].1,
                dur: final_layout[i].2,
                base_dur: seg.dur,
                max_access: seg.max_access(),
                inflation: inflation[i],
                interference: interf[i],
            });
        }
    }
    for segs in &mut cores {
        segs.sort_by(|a, b| (a.start, &a.task, a.index).cmp(&(b.start, &b.task, b.index)));
    }
    let mut placements = placements.to_vec();
    placements.sort_by(|a, b| a.task.cmp(&b.task));
    let mut sch = Schedule {
        mode,
        bus_access_latency: latency,
        placements,
        makespan: 0,
        interference_total: interf.iter().sum(),
        iterations,
        overruns: Vec::new(),
        cores,
    };
    sch.makespan = makespan(&sch);
    sch.overruns = overruns(&sch);
    Ok(sch)
}

fn makespan(sch: &Schedule) -> Cycles {
    sch.segments().map(ScheduledSegment::end).max().unwrap_or(0)
}

fn overruns(sch: &Schedule) -> Vec<Overrun> {
    let ScheduleMode::Budget { budget } = sch.mode else {
        return Vec::new();
    };
    let mut per_task: BTreeMap<&str, Cycles> = BTreeMap::new();
    for s in sch.segments() {
        *per_task.entry(&s.task).or_insert(0) += s.interference;
    }
    per_task
        .into_iter()
        .filter(|&(_, i)| i > budget)
        .map(|(task, interference)| Overrun {
            task: task.to_string(),
            interference,
            budget,
        })
        .collect()
}

/// Interference of every segment (in `cores` order) on the schedule's own
/// layout.
pub fn interference_on_layout(sch: &Schedule) -> Vec<Cycles> {
    let segs: Vec<_> = sch
        .segments()
        .map(|s| (s.core, s.start, s.dur, s.max_access))
        .collect();
    interference(&segs, sch.bus_access_latency)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleViolation {
    pub task: Option<String>,
    pub segment: Option<usize>,
    pub message: String,
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.task, self.segment) {
            (Some(t), Some(i)) => write!(f, "{t}[{i}]: ")?,
            (Some(t), None) => write!(f, "{t}: ")?,
            _ => {}
        }
        f.write_str(&self.message)
    }
}

/// Re-checks a schedule's invariants and its fixed point.
pub fn verify_schedule(sch: &Schedule) -> Vec<ScheduleViolation> {
    let mut out = Vec::new();
    let mut bad = |task: Option<&str>, segment: Option<usize>, message: String| {
        out.push(ScheduleViolation {
            task: task.map(str::to_string),
            segment,
            message,
        })
    };
    let placement: BTreeMap<&str, &Placement> = sch
        .placements
        .iter()
        .map(|p| (p.task.as_str(), p))
        .collect();
    if placement.len() != sch.placements.len() {
        bad(None, None, "duplicate placements".into());
    }

    for (c, segs) in sch.cores.iter().enumerate() {
        for w in segs.windows(2) {
            if w[1].start < w[0].end() {
                bad(
                    Some(&w[1].task),
                    Some(w[1].index),
                    format!("overlaps {}[{}] on core {c}", w[0].task, w[0].index),
                );
            }
        }
        for s in segs {
            let (t, i) = (Some(s.task.as_str()), Some(s.index));
            if s.core != c {
                bad(t, i, format!("listed on core {c} but placed on {}", s.core));
            }
            if s.dur != s.base_dur + s.inflation {
                bad(
                    t,
                    i,
                    format!(
                        "dur {} != base {} + inflation {}",
                        s.dur, s.base_dur, s.inflation
                    ),
                );
            }
            match placement.get(s.task.as_str()) {
                None => bad(t, i, "task has no placement".into()),
                Some(p) if p.core != s.core => bad(t, i, format!("placed on core {}", p.core)),
                Some(p) if s.index == 0 && s.start < p.release + s.offset => {
                    bad(t, i, format!("starts before release {}", p.release))
                }
                _ => {}
            }
        }
    }

    let tasks: BTreeSet<&str> = sch.segments().map(|s| s.task.as_str()).collect();
    for task in tasks {
        let segs = sch.task_segments(task);
        let origin = segs[0].start.checked_sub(segs[0].offset);
        let mut shift = 0;
        for (k, s) in segs.iter().enumerate() {
            if s.index != k {
                bad(
                    Some(task),
                    Some(s.index),
                    "segment indices not contiguous".into(),
                );
                break;
            }
            if k > 0 && s.offset < segs[k - 1].offset + segs[k - 1].base_dur {
                bad(Some(task), Some(k), "profile order not preserved".into());
            }
            if origin.map(|o| o + s.offset + shift) != Some(s.start) {
                bad(
                    Some(task),
                    Some(k),
                    "not rigidly shifted by earlier inflation".into(),
                );
            }
            shift += s.inflation;
        }
    }

    let fresh = interference_on_layout(sch);
    for (s, &x) in sch.segments().zip(&fresh) {
        let (t, i) = (Some(s.task.as_str()), Some(s.index));
        if s.interference != x {
            bad(
                t,
                i,
                format!(
                    "recorded interference {} but layout gives {x}",
                    s.interference
                ),
            );
        }
        match sch.mode {
            ScheduleMode::Inflate if s.inflation != x => bad(
                t,
                i,
                format!("inflation {} is not the fixed point {x}", s.inflation),
            ),
            ScheduleMode::Budget { .. } if s.inflation != 0 => {
                bad(t, i, "budget mode must not inflate".into())
            }
            _ => {}
        }
    }
    if sch.makespan != makespan(sch) {
        bad(
            None,
            None,
            format!("makespan {} != {}", sch.makespan, makespan(sch)),
        );
    }
    let total: Cycles = fresh.iter().sum();
    if sch.interference_total != total {
        bad(
            None,
            None,
            format!("interference_total {} != {total}", sch.interference_total),
        );
    }
    if sch.overruns != overruns(sch) {
        bad(None, None, "overrun list inconsistent with budget".into());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segments::{Segment, TraceId};

    fn single(dur: Cycles, acc: u64) -> SegmentSequence {
        SegmentSequence {
            segments: vec![Segment::new(0, dur, [(TraceId(0), acc)].into())],
            d_max: dur,
        }
    }

    fn place(task: &str, core: usize, release: Cycles) -> Placement {
        Placement {
            task: task.into(),
            core,
            release,
        }
    }

    fn config() -> AnalysisConfig {
        let mut c = AnalysisConfig::new(10, 0, 100);
        c.bus_access_latency = 10;
        c
    }

    fn profiles(items: &[(&str, SegmentSequence)]) -> BTreeMap<String, SegmentSequence> {
        items
            .iter()
            .map(|(t, s)| (t.to_string(), s.clone()))
            .collect()
    }

    #[test]
    fn two_core_overlap() {
        let p = profiles(&[("a", single(100, 3)), ("b", single(100, 5))]);
        let sch = build_schedule(
            &p,
            &[place("a", 0, 0), place("b", 1, 0)],
            &config(),
            ScheduleMode::Inflate,
        )
        .unwrap();
        for s in sch.segments() {
            assert_eq!(s.inflation, 30);
            assert_eq!((s.start, s.end()), (0, 130));
        }
        assert_eq!(sch.makespan, 130);
        assert_eq!(sch.interference_total, 60);
        assert!(verify_schedule(&sch).is_empty());
    }

    #[test]
    fn same_core_no_interference() {
        let p = profiles(&[("a", single(100, 3)), ("b", single(100, 5))]);
        let sch = build_schedule(
            &p,
            &[place("a", 0, 0), place("b", 0, 0)],
            &config(),
            ScheduleMode::Inflate,
        )
        .unwrap();
        assert!(sch.segments().all(|s| s.inflation == 0));
        assert_eq!(sch.task_segments("b")[0].start, 100);
        assert_eq!(sch.makespan, 200);
        assert!(verify_schedule(&sch).is_empty());
    }

    #[test]
    fn disjoint_windows() {
        let p = profiles(&[("a", single(10, 7)), ("b", single(10, 9))]);
        let sch = build_schedule(
            &p,
            &[place("a", 0, 0), place("b", 1, 20)],
            &config(),
            ScheduleMode::Inflate,
        )
        .unwrap();
        assert_eq!(sch.interference_total, 0);
        assert_eq!(sch.makespan, 30);
    }

    #[test]
    fn corrupted_inflation_is_named() {
        let p = profiles(&[("a", single(100, 3)), ("b", single(100, 5))]);
        let mut sch = build_schedule(
            &p,
            &[place("a", 0, 0), place("b", 1, 0)],
            &config(),
            ScheduleMode::Inflate,
        )
        .unwrap();
        sch.cores[1][0].inflation = 29;
        let v = verify_schedule(&sch);
        assert!(v
            .iter()
            .any(|x| x.task.as_deref() == Some("b") && x.segment == Some(0)));
    }

    #[test]
    fn budget_mode_reports_overrun() {
        let p = profiles(&[("a", single(100, 3)), ("b", single(100, 5))]);
        let sch = build_schedule(
            &p,
            &[place("a", 0, 0), place("b", 1, 0)],
            &config(),
            ScheduleMode::Budget { budget: 20 },
        )
        .unwrap();
        assert!(sch
            .segments()
            .all(|s| s.inflation == 0 && s.interference == 30));
        assert_eq!(sch.overruns.len(), 2);
        assert!(verify_schedule(&sch).is_empty());
        let ok = build_schedule(
            &p,
            &[place("a", 0, 0), place("b", 1, 0)],
            &config(),
            ScheduleMode::Budget { budget: 30 },
        )
        .unwrap();
        assert!(ok.overruns.is_empty());
    }

    #[test]
    fn bad_placements_rejected() {
        let p = profiles(&[("a", single(10, 1))]);
        for pl in [
            vec![],
            vec![place("a", 0, 0), place("a", 1, 0)],
            vec![place("a", 0, 0), place("z", 0, 0)],
        ] {
            assert!(matches!(
                build_schedule(&p, &pl, &config(), ScheduleMode::Inflate),
                Err(Error::Validation { .. })
            ));
        }
    }

    #[test]
    fn rigid_shift() {
        // task a: [0,10) acc 2, [10,30) acc 0; task b overlaps only the first.
        let a = SegmentSequence {
            segments: vec![
                Segment::new(0, 10, [(TraceId(0), 2)].into()),
                Segment::new(10, 20, [(TraceId(0), 0)].into()),
            ],
            d_max: 30,
        };
        let p = profiles(&[("a", a), ("b", single(5, 4))]);
        let sch = build_schedule(
            &p,
            &[place("a", 0, 0), place("b", 1, 0)],
            &config(),
            ScheduleMode::Inflate,
        )
        .unwrap();
        let a = sch.task_segments("a");
        assert_eq!((a[0].inflation, a[1].start, a[1].inflation), (20, 30, 0));
        assert_eq!(sch.task_segments("b")[0].inflation, 20);
        assert!(verify_schedule(&sch).is_empty());
    }

    #[test]
    fn default_placement_per_core() {
        let pl = default_placements(["b", "a"]);
        assert_eq!(pl, vec![place("a", 0, 0), place("b", 1, 0)]);
    }
}
