use std::path::PathBuf;

use crate::graph::ThingId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Refusals by the forgetting policy (for instance a delete without an
/// archive copy) are *not* errors; they are recorded in the audit log.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("thing `{0}` already exists")]
    DuplicateId(ThingId),

    #[error("thing `{id}` has invalid attributes for its kind: {reason}")]
    InvalidKindAttributes { id: ThingId, reason: String },

    #[error("invalid thing: {0}")]
    InvalidThing(String),

    #[error("unknown thing `{0}`")]
    UnknownThing(ThingId),

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed snapshot line {line}: {reason}")]
    MalformedSnapshotLine { line: usize, reason: String },

    #[error("malformed evidence{}: {reason}", line_suffix(*.line))]
    MalformedEvidence { line: Option<usize>, reason: String },

    #[error("unknown action `{action}`{}", line_suffix(*.line))]
    UnknownAction { line: Option<usize>, action: String },

    #[error("trace is not monotonic at record {index}: {ts} < {previous}")]
    NonMonotonicTrace { index: usize, ts: i64, previous: i64 },

    #[error("evidence references unknown thing `{0}`")]
    UnknownThingReference(ThingId),

    #[error("clock regression: now {now} is before last update {last_update}")]
    ClockRegression { now: i64, last_update: i64 },

    #[error("group MB requires at least one user")]
    EmptyUserSet,

    #[error("`{0}` is not a context")]
    NotAContext(ThingId),

    #[error("`{thing}` is not accessible to user `{user}`")]
    Inaccessible { user: String, thing: ThingId },

    #[error("`{child}` is not a direct child of `{parent}`")]
    NotParentChild { parent: ThingId, child: ThingId },

    #[error("context `{context}` was active {days:.1} days ago, cooldown is {cooldown:.1} days")]
    CooldownNotElapsed { context: ThingId, days: f64, cooldown: f64 },

    #[error("context `{context}` received evidence {days:.1} days ago")]
    RecentEvidence { context: ThingId, days: f64 },

    #[error("setting parent of `{child}` to `{parent}` would create a cycle")]
    ContextCycle { parent: ThingId, child: ThingId },

    #[error("cannot condense an empty region")]
    EmptyRegion,

    #[error("invalid period: start {start} is after end {end}")]
    InvalidPeriod { start: i64, end: i64 },

    #[error("query has no searchable terms")]
    EmptyQuery,

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing replay output {0}")]
    MissingReplayOutput(PathBuf),

    #[error("event {index}: {source}")]
    AtEvent {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

fn line_suffix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!(" on line {l}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the file system rather than by input content.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::MissingReplayOutput(_) => true,
            Error::AtEvent { source, .. } => source.is_io(),
            _ => false,
        }
    }

    pub(crate) fn at_line(self, line: usize) -> Self {
        match self {
            Error::MalformedEvidence { reason, .. } => Error::MalformedEvidence {
                line: Some(line),
                reason,
            },
            Error::UnknownAction { action, .. } => Error::UnknownAction {
                line: Some(line),
                action,
            },
            other => other,
        }
    }
}
