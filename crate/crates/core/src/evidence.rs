//! Evidence traces: parsing, ordering, and mapping to stimulation requests.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, ThingId, UserId};
use crate::time::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    View,
    Create,
    Modify,
    Annotate,
    Search,
    ContextSwitch,
}

impl ActionKind {
    pub const ALL: [ActionKind; 6] = [
        ActionKind::View,
        ActionKind::Create,
        ActionKind::Modify,
        ActionKind::Annotate,
        ActionKind::Search,
        ActionKind::ContextSwitch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::View => "view",
            ActionKind::Create => "create",
            ActionKind::Modify => "modify",
            ActionKind::Annotate => "annotate",
            ActionKind::Search => "search",
            ActionKind::ContextSwitch => "context_switch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    #[default]
    Desktop,
    Mobile,
}

impl Device {
    pub fn as_str(self) -> &'static str {
        match self {
            Device::Desktop => "desktop",
            Device::Mobile => "mobile",
        }
    }
}

impl std::str::FromStr for Device {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desktop" => Ok(Device::Desktop),
            "mobile" => Ok(Device::Mobile),
            other => Err(format!("unknown device `{other}`")),
        }
    }
}

/// One observed user action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Evidence {
    pub ts: Timestamp,
    pub user: UserId,
    pub action: ActionKind,
    /// For `context_switch`, the target context.
    pub thing: ThingId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context: Option<ThingId>,
    pub device: Device,
}

#[derive(Deserialize)]
struct RawEvidence {
    ts: i64,
    user: String,
    action: String,
    thing: String,
    #[serde(default)]
    context: Option<String>,
    #[serde(default)]
    device: Option<Device>,
}

pub fn parse_evidence_line(line: &str) -> Result<Evidence> {
    let malformed = |reason: String| Error::MalformedEvidence { line: None, reason };
    let raw: RawEvidence = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let action = ActionKind::parse(&raw.action).ok_or_else(|| Error::UnknownAction {
        line: None,
        action: raw.action.clone(),
    })?;
    if raw.ts < 0 {
        return Err(malformed(format!("negative timestamp {}", raw.ts)));
    }
    if raw.user.is_empty() {
        return Err(malformed("empty user".into()));
    }
    let thing = ThingId::new(raw.thing).map_err(|_| malformed("empty thing".into()))?;
    let context = match raw.context {
        Some(c) => Some(ThingId::new(c).map_err(|_| malformed("empty context".into()))?),
        None => None,
    };
    Ok(Evidence {
        ts: raw.ts,
        user: UserId::new(raw.user),
        action,
        thing,
        context,
        device: raw.device.unwrap_or_default(),
    })
}

pub fn to_json_line(e: &Evidence) -> String {
    serde_json::to_string(e).expect("evidence serializes")
}

/// Parses a whole trace; blank lines are skipped, errors carry line numbers.
pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<Evidence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_evidence_line(&line).map_err(|e| e.at_line(idx + 1))?);
    }
    Ok(out)
}

pub fn write_trace(records: &[Evidence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for e in records {
        w.write_all(to_json_line(e).as_bytes()).map_err(io)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TraceOrdering {
    /// Stable-sort out-of-order records by timestamp.
    #[default]
    Lenient,
    /// Reject the first decreasing timestamp.
    Strict,
}

/// Returns the trace in non-decreasing `ts` order; equal timestamps keep
/// their input order.
pub fn validate_trace(mut records: Vec<Evidence>, ordering: TraceOrdering) -> Result<Vec<Evidence>> {
    if let Some(i) = records.windows(2).position(|w| w[1].ts < w[0].ts) {
        match ordering {
            TraceOrdering::Strict => {
                return Err(Error::NonMonotonicTrace {
                    index: i + 1,
                    ts: records[i + 1].ts,
                    previous: records[i].ts,
                })
            }
            TraceOrdering::Lenient => records.sort_by_key(|e| e.ts),
        }
    }
    Ok(records)
}

/// Per-action stimulation magnitudes. `search` and `context_switch` have no
/// entry: they drive the search and context modules instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StimulationTable {
    pub create: f64,
    pub modify: f64,
    pub annotate: f64,
    pub view: f64,
}

impl Default for StimulationTable {
    fn default() -> Self {
        StimulationTable {
            create: 0.60,
            modify: 0.45,
            annotate: 0.40,
            view: 0.30,
        }
    }
}

impl StimulationTable {
    pub fn magnitude(&self, action: ActionKind) -> Option<f64> {
        match action {
            ActionKind::Create => Some(self.create),
            ActionKind::Modify => Some(self.modify),
            ActionKind::Annotate => Some(self.annotate),
            ActionKind::View => Some(self.view),
            ActionKind::Search | ActionKind::ContextSwitch => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [
            ("create", self.create),
            ("modify", self.modify),
            ("annotate", self.annotate),
            ("view", self.view),
        ] {
            if !(m > 0.0 && m <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "stimulation.{name} must be in (0, 1], got {m}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StimulationRequest {
    pub target: ThingId,
    pub magnitude: f64,
    pub at: Timestamp,
    pub context: Option<ThingId>,
    pub user: UserId,
}

/// Maps evidence to a stimulation of its target thing. Routed actions
/// (`search`, `context_switch`) yield `None`.
pub fn to_stimulation(e: &Evidence, table: &StimulationTable, graph: &Graph) -> Result<Option<StimulationRequest>> {
    if !graph.contains(&e.thing) {
        return Err(Error::UnknownThingReference(e.thing.clone()));
    }
    Ok(table.magnitude(e.action).map(|magnitude| StimulationRequest {
        target: e.thing.clone(),
        magnitude,
        at: e.ts,
        context: e.context.clone(),
        user: e.user.clone(),
    }))
}
