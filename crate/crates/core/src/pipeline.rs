//! Stage artifacts and end-to-end analysis.
//!
//! Every stage output is wrapped in an envelope that echoes the source
//! document and the effective configuration, so any artifact can be fed back
//! in to continue the pipeline. Digests chain the stages: each envelope
//! records the content digest of the stage it was computed from.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cfg_model::{AnalysisConfig, ConfigDoc, TaskSystem, TaskSystemDoc};
use crate::error::{Error, Result, Violation};
use crate::exec::Execution;
use crate::scheduler::{
    build_schedule, verify_schedule, Schedule, ScheduleMode, ScheduleViolation,
};
use crate::segments::{
    fusion, refine_task, replay_check, window_access_bound, AccessMap, Segment, SegmentSequence,
    SegmentViolation,
};
use crate::tipsgraph::verify::{verify_edge_bounds, EdgeBoundReport};
use crate::tipsgraph::{build_tipsgraph, TipsGraph};
use crate::trace_enum::verify::{check_conservativeness, ConservativenessReport};
use crate::trace_enum::{enumerate_traces, TraceSet};
use crate::Cycles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Tipsgraph,
    Traces,
    Segments,
    Schedule,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Tipsgraph => "tipsgraph",
            Stage::Traces => "traces",
            Stage::Segments => "segments",
            Stage::Schedule => "schedule",
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_of<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("artifacts serialize"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope<T> {
    pub stage: Stage,
    /// SHA-256 of the original input file.
    pub source_digest: String,
    /// Effective configuration (input plus command-line overrides).
    pub config: ConfigDoc,
    pub source: TaskSystemDoc,
    pub upstream_digest: Option<String>,
    pub content_digest: String,
    pub content: T,
}

impl<T: Serialize + DeserializeOwned> Envelope<T> {
    fn new(stage: Stage, ctx: &Context, upstream: Option<String>, content: T) -> Self {
        Envelope {
            stage,
            source_digest: ctx.source_digest.clone(),
            config: ConfigDoc::from(&ctx.config),
            source: ctx.source.clone(),
            upstream_digest: upstream,
            content_digest: digest_of(&content),
            content,
        }
    }

    fn check(&self, stage: Stage) -> Result<()> {
        let bad = |why: String| Err(Error::invalid(stage.name(), Violation::BadArtifact(why)));
        if self.stage != stage {
            return bad(format!("expected a {} artifact", stage.name()));
        }
        if digest_of(&self.content) != self.content_digest {
            return bad("content digest does not match content".into());
        }
        Ok(())
    }
}

pub type TipsGraphArtifact = Envelope<BTreeMap<String, TipsGraph>>;
pub type TracesArtifact = Envelope<BTreeMap<String, TraceSet>>;
pub type SegmentsArtifact = Envelope<BTreeMap<String, TaskProfile>>;
pub type ScheduleArtifact = Envelope<Schedule>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSegment {
    pub start: Cycles,
    pub dur: Cycles,
    pub mu: AccessMap,
    pub max_access: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowBound {
    pub window: Cycles,
    pub accesses: u64,
}

/// Exported segment profile of one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskProfile {
    pub d_max: Cycles,
    pub traces: usize,
    pub segments: Vec<ProfileSegment>,
    /// Access bounds for windows of 1, 2, 4, ... cycles and for `d_max`.
    pub window_bounds: Vec<WindowBound>,
}

impl TaskProfile {
    pub fn new(seq: &SegmentSequence, traces: usize) -> TaskProfile {
        let mut windows: Vec<Cycles> = std::iter::successors(Some(1u64), |w| w.checked_mul(2))
            .take_while(|&w| w < seq.d_max)
            .collect();
        if seq.d_max > 0 {
            windows.push(seq.d_max);
        }
        TaskProfile {
            d_max: seq.d_max,
            traces,
            segments: seq
                .segments
                .iter()
                .map(|s| ProfileSegment {
                    start: s.start,
                    dur: s.dur,
                    mu: s.mu.clone(),
                    max_access: s.max_access(),
                })
                .collect(),
            window_bounds: windows
                .into_iter()
                .map(|window| WindowBound {
                    window,
                    accesses: window_access_bound(seq, window),
                })
                .collect(),
        }
    }

    pub fn sequence(&self) -> SegmentSequence {
        SegmentSequence {
            segments: self
                .segments
                .iter()
                .map(|s| Segment::new(s.start, s.dur, s.mu.clone()))
                .collect(),
            d_max: self.d_max,
        }
    }
}

/// Everything a run can start from.
#[derive(Debug, Clone)]
pub enum Input {
    System(TaskSystemDoc),
    Tipsgraph(TipsGraphArtifact),
    Traces(TracesArtifact),
    Segments(SegmentsArtifact),
    Schedule(ScheduleArtifact),
}

/// Configuration overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub delta: Option<Cycles>,
    pub max_traces: Option<u64>,
}

/// A loaded input with its resolved configuration.
#[derive(Debug, Clone)]
pub struct Context {
    pub source_digest: String,
    pub source: TaskSystemDoc,
    pub system: TaskSystem,
    pub config: AnalysisConfig,
    pub exec: Execution,
    input: Input,
}

/// Parses an input file: a task system document or any stage artifact
/// (recognised by its `stage` key).
pub fn parse_input(bytes: &[u8]) -> Result<(Input, String)> {
    let value: serde_json::Value = serde_json::from_slice(bytes)?;
    let stage = value.get("stage").cloned();
    let input = match stage {
        None => Input::System(serde_json::from_value(value)?),
        Some(s) => match serde_json::from_value::<Stage>(s)? {
            Stage::Tipsgraph => Input::Tipsgraph(serde_json::from_value(value)?),
            Stage::Traces => Input::Traces(serde_json::from_value(value)?),
            Stage::Segments => Input::Segments(serde_json::from_value(value)?),
            Stage::Schedule => Input::Schedule(serde_json::from_value(value)?),
        },
    };
    let digest = match &input {
        Input::System(_) => sha256_hex(bytes),
        Input::Tipsgraph(e) => e.source_digest.clone(),
        Input::Traces(e) => e.source_digest.clone(),
        Input::Segments(e) => e.source_digest.clone(),
        Input::Schedule(e) => e.source_digest.clone(),
    };
    Ok((input, digest))
}

impl Context {
    pub fn from_bytes(bytes: &[u8], overrides: &Overrides, exec: Execution) -> Result<Context> {
        let (input, digest) = parse_input(bytes)?;
        Context::new(input, digest, overrides, exec)
    }

    pub fn new(
        input: Input,
        source_digest: String,
        overrides: &Overrides,
        exec: Execution,
    ) -> Result<Context> {
        let (source, base) = match &input {
            Input::System(doc) => (doc.clone(), doc.config.clone()),
            Input::Tipsgraph(e) => {
                e.check(Stage::Tipsgraph)?;
                (e.source.clone(), e.config.clone())
            }
            Input::Traces(e) => {
                e.check(Stage::Traces)?;
                (e.source.clone(), e.config.clone())
            }
            Input::Segments(e) => {
                e.check(Stage::Segments)?;
                (e.source.clone(), e.config.clone())
            }
            Input::Schedule(e) => {
                e.check(Stage::Schedule)?;
                (e.source.clone(), e.config.clone())
            }
        };
        let system = TaskSystem::from_document(&source)?;
        let mut config = AnalysisConfig::from(&base);
        if let Some(d) = overrides.delta {
            config.delta = d;
        }
        if let Some(m) = overrides.max_traces {
            config.max_traces = m;
        }
        config.validate()?;
        Ok(Context {
            source_digest,
            source,
            system,
            config,
            exec,
            input,
        })
    }

    fn task_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .system
            .tasks
            .iter()
            .map(|t| t.name().to_string())
            .collect();
        v.sort();
        v
    }

    /// Per-task work in parallel, merged in task name order.
    fn per_task<T: Send>(
        &self,
        f: impl Fn(&str) -> Result<T> + Sync + Send,
    ) -> Result<BTreeMap<String, T>> {
        let names = self.task_names();
        let results = self.exec.map(&names, |n| f(n));
        names
            .into_iter()
            .zip(results)
            .map(|(n, r)| r.map(|v| (n, v)))
            .collect()
    }

    pub fn tipsgraphs(&self) -> Result<TipsGraphArtifact> {
        if let Input::Tipsgraph(e) = &self.input {
            return Ok(e.clone());
        }
        let content = self.per_task(|name| {
            let cfg = self.system.task(name).expect("task exists");
            build_tipsgraph(cfg, &self.config)
        })?;
        Ok(Envelope::new(Stage::Tipsgraph, self, None, content))
    }

    pub fn traces(&self) -> Result<TracesArtifact> {
        if let Input::Traces(e) = &self.input {
            return Ok(e.clone());
        }
        let tg = self.tipsgraphs()?;
        let content = self.per_task(|name| enumerate_traces(&tg.content[name], &self.config))?;
        Ok(Envelope::new(
            Stage::Traces,
            self,
            Some(tg.content_digest),
            content,
        ))
    }

    pub fn segments(&self) -> Result<SegmentsArtifact> {
        if let Input::Segments(e) = &self.input {
            return Ok(e.clone());
        }
        let tr = self.traces()?;
        let content = self.per_task(|name| {
            let ts = &tr.content[name];
            // the refinement itself runs sequentially inside each task job
            let refined = refine_task(ts, &self.config, Execution::Sequential)?;
            Ok(TaskProfile::new(
                &fusion(&refined, self.config.delta),
                ts.len(),
            ))
        })?;
        Ok(Envelope::new(
            Stage::Segments,
            self,
            Some(tr.content_digest),
            content,
        ))
    }

    pub fn schedule(&self, mode: ScheduleMode) -> Result<ScheduleArtifact> {
        if let Input::Schedule(e) = &self.input {
            if e.content.mode == mode {
                return Ok(e.clone());
            }
        }
        let seg = self.segments()?;
        let profiles: BTreeMap<String, SegmentSequence> = seg
            .content
            .iter()
            .map(|(k, p)| (k.clone(), p.sequence()))
            .collect();
        let sch = build_schedule(
            &profiles,
            &self.system.effective_placements(),
            &self.config,
            mode,
        )?;
        Ok(Envelope::new(
            Stage::Schedule,
            self,
            Some(seg.content_digest),
            sch,
        ))
    }

    /// Runs every stage from the source document.
    pub fn analyze(&self, mode: ScheduleMode) -> Result<PipelineArtifacts> {
        let tipsgraph = self.tipsgraphs()?;
        let traces = self.traces()?;
        let segments = self.segments()?;
        let schedule = self.schedule(mode)?;
        let mut tasks = BTreeMap::new();
        for name in self.task_names() {
            tasks.insert(
                name.clone(),
                TaskArtifacts {
                    tipsgraph: tipsgraph.content[&name].clone(),
                    traces: traces.content[&name].clone(),
                    profile: segments.content[&name].clone(),
                },
            );
        }
        let digests = [
            tipsgraph.content_digest,
            traces.content_digest,
            segments.content_digest,
            schedule.content_digest,
        ];
        Ok(PipelineArtifacts {
            source_digest: self.source_digest.clone(),
            config: ConfigDoc::from(&self.config),
            tasks,
            schedule: schedule.content,
            stage_digests: digests.to_vec(),
        })
    }

    /// Runs every checker against freshly computed artifacts.
    pub fn verify(&self, mode: ScheduleMode, unroll_limit: u64) -> Result<VerifyReport> {
        let tg = self.tipsgraphs()?;
        let tr = self.traces()?;
        let mut tasks = BTreeMap::new();
        let checks = self.per_task(|name| {
            let cfg = self.system.task(name).expect("task exists");
            let edge_bounds =
                verify_edge_bounds(cfg, &tg.content[name], &self.config, unroll_limit)?;
            let ts = &tr.content[name];
            let conservativeness = check_conservativeness(cfg, ts, &self.config, unroll_limit)?;
            let refined = refine_task(ts, &self.config, Execution::Sequential)?;
            let fused = fusion(&refined, self.config.delta);
            let segments = replay_check(ts, &refined, &fused, &self.config);
            Ok(TaskVerification {
                edge_bounds,
                conservativeness,
                segments,
            })
        })?;
        tasks.extend(checks);
        let schedule = verify_schedule(&self.schedule(mode)?.content);
        Ok(VerifyReport { tasks, schedule })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskVerification {
    pub edge_bounds: EdgeBoundReport,
    pub conservativeness: ConservativenessReport,
    pub segments: Vec<SegmentViolation>,
}

impl TaskVerification {
    pub fn ok(&self) -> bool {
        self.edge_bounds.ok() && self.conservativeness.ok() && self.segments.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub tasks: BTreeMap<String, TaskVerification>,
    pub schedule: Vec<ScheduleViolation>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.tasks.values().all(TaskVerification::ok) && self.schedule.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, t) in &self.tasks {
            let status = |ok: bool| if ok { "ok" } else { "FAILED" };
            out.push_str(&format!(
                "{name}: edge bounds {} ({} paths), conservativeness {} ({} paths), segments {}\n",
                status(t.edge_bounds.ok()),
                t.edge_bounds.checked_paths,
                status(t.conservativeness.ok()),
                t.conservativeness.concrete_paths,
                status(t.segments.is_empty()),
            ));
            for v in &t.edge_bounds.violations {
                out.push_str(&format!("  {v}\n"));
            }
            for v in &t.conservativeness.violations {
                out.push_str(&format!("  {v}\n"));
            }
            for v in &t.segments {
                out.push_str(&format!("  {v}\n"));
            }
        }
        out.push_str(&format!(
            "schedule: {}\n",
            if self.schedule.is_empty() {
                "ok"
            } else {
                "FAILED"
            }
        ));
        for v in &self.schedule {
            out.push_str(&format!("  {v}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskArtifacts {
    pub tipsgraph: TipsGraph,
    pub traces: TraceSet,
    pub profile: TaskProfile,
}

/// All artifacts of one run, with the chain of stage digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineArtifacts {
    pub source_digest: String,
    pub config: ConfigDoc,
    pub tasks: BTreeMap<String, TaskArtifacts>,
    pub schedule: Schedule,
    /// Content digests of the tipsgraph, traces, segments and schedule stages.
    pub stage_digests: Vec<String>,
}

impl PipelineArtifacts {
    /// Recomputes the per-stage digests and compares them to the recorded ones.
    pub fn stage_consistent(&self) -> bool {
        fn per<'a, T: Serialize + 'a>(
            tasks: &'a BTreeMap<String, TaskArtifacts>,
            f: impl Fn(&'a TaskArtifacts) -> &'a T,
        ) -> String {
            let m: BTreeMap<&String, &T> = tasks.iter().map(|(k, v)| (k, f(v))).collect();
            digest_of(&m)
        }
        let tg = per(&self.tasks, |t| &t.tipsgraph);
        let tr = per(&self.tasks, |t| &t.traces);
        let sg = per(&self.tasks, |t| &t.profile);
        self.stage_digests == [tg, tr, sg, digest_of(&self.schedule)]
    }
}
