use std::fmt;

use crate::Cycles;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error in `{entity}`: {violation}")]
    Validation {
        entity: String,
        violation: Violation,
    },

    #[error("{what} exceeded the limit of {limit}")]
    Explosion { what: &'static str, limit: u64 },

    #[error("schedule did not reach a fixed point within {0} iterations")]
    NonConvergence(usize),

    #[error("tip `{0}` does not lie on any start-to-end path")]
    UnreachableTip(String),

    #[error("negative gap after `{tip}`: next date {next} precedes access end {access_end}")]
    NegativeGap {
        tip: String,
        access_end: Cycles,
        next: Cycles,
    },

    #[error("segment sequences cover different horizons ({0} vs {1})")]
    HorizonMismatch(Cycles, Cycles),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(entity: impl Into<String>, violation: Violation) -> Self {
        Error::Validation {
            entity: entity.into(),
            violation,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

/// The invariant an input failed to satisfy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyTaskSystem,
    EmptyTask,
    EmptyBlock,
    DuplicateId,
    UnknownBlock(String),
    AccessCountMismatch,
    DuplicateEdge(String, String),
    EntryHasPredecessor,
    ExitHasSuccessor,
    Unreachable,
    CannotReachExit,
    HeaderNotMember,
    ZeroMaxIter,
    InvertedLoopBounds { min: u64, max: u64 },
    NoBackEdge,
    BadBackEdge(String, String),
    BackEdgesMismatch,
    BadExitEdge(String, String),
    ExitEdgesMismatch,
    SideEntry(String, String),
    NotNaturalLoop(String),
    DuplicateLoopHeader,
    LoopsOverlap(String),
    IrreducibleCycle,
    ConfigField(&'static str),
    BadArtifact(String),
    Placement(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EmptyTaskSystem => write!(f, "task system has no tasks"),
            EmptyTask => write!(f, "task has no basic blocks"),
            EmptyBlock => write!(f, "basic block has no instructions"),
            DuplicateId => write!(f, "duplicate identifier"),
            UnknownBlock(b) => write!(f, "reference to unknown block `{b}`"),
            AccessCountMismatch => write!(
                f,
                "max_accesses inconsistent with mem_class (AlwaysHit/NonMemory need 0, NotClassified needs >= 1)"
            ),
            DuplicateEdge(s, d) => write!(f, "duplicate edge {s} -> {d}"),
            EntryHasPredecessor => write!(f, "entry block has incoming edges"),
            ExitHasSuccessor => write!(f, "exit block has outgoing edges"),
            Unreachable => write!(f, "block unreachable from entry"),
            CannotReachExit => write!(f, "exit unreachable from block"),
            HeaderNotMember => write!(f, "loop header is not a loop member"),
            ZeroMaxIter => write!(f, "max_iter must be positive"),
            InvertedLoopBounds { min, max } => {
                write!(f, "inverted loop bounds (min_iter {min} > max_iter {max})")
            }
            NoBackEdge => write!(f, "loop declares no back edge"),
            BadBackEdge(s, d) => write!(
                f,
                "back edge {s} -> {d} must be a task edge from a member to the header"
            ),
            BackEdgesMismatch => write!(
                f,
                "declared back edges differ from the member-to-header edges of the graph"
            ),
            BadExitEdge(s, d) => write!(
                f,
                "exit edge {s} -> {d} must be a task edge from a member to a non-member"
            ),
            ExitEdgesMismatch => write!(
                f,
                "declared exit edges differ from the edges leaving the loop members"
            ),
            SideEntry(s, d) => write!(f, "edge {s} -> {d} enters the loop below its header"),
            NotNaturalLoop(b) => write!(
                f,
                "member `{b}` cannot reach a back edge without leaving the loop"
            ),
            DuplicateLoopHeader => write!(f, "two loops share the same header"),
            LoopsOverlap(other) => write!(
                f,
                "loop member sets overlap without nesting (conflicts with loop at `{other}`)"
            ),
            IrreducibleCycle => write!(f, "irreducible cycle not covered by any declared back edge"),
            ConfigField(name) => write!(f, "configuration field `{name}` must be positive"),
            BadArtifact(why) => write!(f, "malformed artifact: {why}"),
            Placement(why) => write!(f, "invalid placement: {why}"),
        }
    }
}
