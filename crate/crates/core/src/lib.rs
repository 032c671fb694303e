//! Static extraction of timed memory-access profiles for real-time tasks.
//!
//! The pipeline runs per task:
//!
//! 1. [`cfg_model`] loads annotated control-flow graphs.
//! 2. [`tipsgraph`] abstracts each graph onto its time interest points
//!    (instructions that may reach the shared bus) with conservative
//!    inter-point WCETs.
//! 3. [`trace_enum`] enumerates worst-case timed traces with bounded loops.
//! 4. [`segments`] turns the traces into a temporal segment profile.
//! 5. [`scheduler`] places profiles on cores and inflates overlapping
//!    segments until the interference bound reaches a fixed point.
//!
//! [`pipeline`] wires the stages together and defines the stage artifacts.

pub mod cfg_model;
mod concrete;
pub mod error;
pub mod exec;
pub mod pipeline;
pub mod render;
pub mod scheduler;
pub mod segments;
pub mod synth;
pub mod tipsgraph;
pub mod trace_enum;

/// Processor cycles. All dates and durations are integral.
pub type Cycles = u64;

pub use cfg_model::{load_task_system, AnalysisConfig, TaskCfg, TaskSystem};
pub use error::{Error, Result, Violation};
pub use exec::Execution;
pub use scheduler::{build_schedule, verify_schedule, Placement, Schedule, ScheduleMode};
pub use segments::{Segment, SegmentSequence, TraceId};
pub use tipsgraph::{build_tipsgraph, TipId, TipKind, TipsGraph};
pub use trace_enum::{enumerate_traces, Trace, TraceSet};
