//! The semantic graph: typed things, labelled directed edges, access control.
//!
//! Adjacency is indexed in both directions and every neighbor list is kept
//! sorted by `(ThingId, PredicateKind)`, so traversal order never depends on
//! insertion order. `version` counts successful mutations and is the change
//! feed the buoyancy engine keys incremental work on.

mod snapshot;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Timestamp;

pub use snapshot::{load_snapshot, read_snapshot, save_snapshot, write_snapshot, SNAPSHOT_FORMAT};

/// Globally unique thing identifier (URI form, e.g. `pimo:doc1`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThingId(String);

impl ThingId {
    pub fn new(uri: impl Into<String>) -> Result<Self> {
        let uri = uri.into();
        if uri.is_empty() {
            return Err(Error::InvalidThing("thing id must not be empty".into()));
        }
        Ok(ThingId(uri))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ThingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ThingId {
    /// Panics on an empty string; use [`ThingId::new`] for untrusted input.
    fn from(s: &str) -> Self {
        ThingId::new(s).expect("non-empty thing id")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(String);

impl UserId {
    pub fn new(name: impl Into<String>) -> Self {
        UserId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_owned())
    }
}

macro_rules! closed_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(concat!("unknown ", stringify!($name), " `{}`"), other)),
                }
            }
        }
    };
}

closed_enum!(
    /// Closed vocabulary of thing types. Unknown kinds are rejected on input.
    ThingKind {
        Topic => "topic",
        Task => "task",
        Event => "event",
        Person => "person",
        Organization => "organization",
        Document => "document",
        Webpage => "webpage",
        Image => "image",
        Note => "note",
        Email => "email",
        Presentation => "presentation",
        File => "file",
        Context => "context",
    }
);

closed_enum!(
    PredicateKind {
        RelatesTo => "relates_to",
        PartOf => "part_of",
        AnnotatedWith => "annotated_with",
        AttendedBy => "attended_by",
        AttachmentOf => "attachment_of",
        HasTopic => "has_topic",
        InContext => "in_context",
    }
);

/// Scalar attribute value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl AttrValue {
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            AttrValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

pub const ATTR_EVENT_DATE: &str = "event_date";
pub const ATTR_TASK_STATUS: &str = "task_status";
pub const ATTR_BYTE_SIZE: &str = "byte_size";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskStatus {
    Open,
    Finished,
}

impl TaskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Open => "open",
            TaskStatus::Finished => "finished",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Thing {
    pub id: ThingId,
    pub kind: ThingKind,
    pub label: String,
    pub created_at: Timestamp,
    pub owner: UserId,
    pub shared_with: BTreeSet<UserId>,
    pub attributes: BTreeMap<String, AttrValue>,
}

impl Thing {
    pub fn new(id: impl Into<ThingId>, kind: ThingKind, label: impl Into<String>, owner: impl Into<UserId>) -> Self {
        Thing {
            id: id.into(),
            kind,
            label: label.into(),
            created_at: 0,
            owner: owner.into(),
            shared_with: BTreeSet::new(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn created_at(mut self, ts: Timestamp) -> Self {
        self.created_at = ts;
        self
    }

    pub fn shared_with<I, U>(mut self, users: I) -> Self
    where
        I: IntoIterator<Item = U>,
        U: Into<UserId>,
    {
        self.shared_with.extend(users.into_iter().map(Into::into));
        self
    }

    pub fn attr(mut self, name: &str, value: AttrValue) -> Self {
        self.attributes.insert(name.to_owned(), value);
        self
    }

    pub fn event_date(&self) -> Option<Timestamp> {
        self.attributes.get(ATTR_EVENT_DATE).and_then(AttrValue::as_i64)
    }

    pub fn task_status(&self) -> Option<TaskStatus> {
        match self.attributes.get(ATTR_TASK_STATUS).and_then(AttrValue::as_text) {
            Some("open") => Some(TaskStatus::Open),
            Some("finished") => Some(TaskStatus::Finished),
            _ => None,
        }
    }

    pub fn is_finished_task(&self) -> bool {
        self.kind == ThingKind::Task && self.task_status() == Some(TaskStatus::Finished)
    }

    /// File-backed things carry a `byte_size` and take part in tiering.
    pub fn is_file_backed(&self) -> bool {
        self.attributes.contains_key(ATTR_BYTE_SIZE)
    }

    /// The owner always has access; everyone else needs to be in `shared_with`.
    pub fn accessible_to(&self, user: &UserId) -> bool {
        &self.owner == user || self.shared_with.contains(user)
    }

    /// Owner plus everyone the thing is shared with, sorted.
    pub fn access_set(&self) -> BTreeSet<UserId> {
        let mut set = self.shared_with.clone();
        set.insert(self.owner.clone());
        set
    }

    fn validate(&self) -> Result<()> {
        if self.owner.as_str().is_empty() {
            return Err(Error::InvalidThing(format!("thing `{}` has an empty owner", self.id)));
        }
        let invalid = |reason: &str| Error::InvalidKindAttributes {
            id: self.id.clone(),
            reason: reason.to_owned(),
        };
        match self.kind {
            ThingKind::Event if self.event_date().is_none() => {
                Err(invalid("event requires an integer `event_date`"))
            }
            ThingKind::Task if self.task_status().is_none() => {
                Err(invalid("task requires `task_status` of `open` or `finished`"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub subject: ThingId,
    pub predicate: PredicateKind,
    pub object: ThingId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Outgoing,
    Incoming,
    Both,
}

#[derive(Clone, Debug, PartialEq, Default)]
struct Node {
    thing: Option<Thing>,
    /// `(object, predicate)` sorted.
    out: Vec<(ThingId, PredicateKind)>,
    /// `(subject, predicate)` sorted.
    inc: Vec<(ThingId, PredicateKind)>,
}

/// In-memory semantic graph.
///
/// Single writer: all mutations take `&mut self`. A shared `&Graph` is a
/// consistent read view identified by [`Graph::version`].
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Graph {
    nodes: BTreeMap<ThingId, Node>,
    by_kind: BTreeMap<ThingKind, BTreeSet<ThingId>>,
    edge_count: usize,
    version: u64,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn set_version(&mut self, version: u64) {
        self.version = version;
    }

    pub fn thing_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn add_thing(&mut self, thing: Thing) -> Result<ThingId> {
        if self.nodes.contains_key(&thing.id) {
            return Err(Error::DuplicateId(thing.id));
        }
        thing.validate()?;
        let id = thing.id.clone();
        self.by_kind.entry(thing.kind).or_default().insert(id.clone());
        self.nodes.insert(
            id.clone(),
            Node {
                thing: Some(thing),
                ..Node::default()
            },
        );
        self.version += 1;
        Ok(id)
    }

    /// Adds `(subject, predicate, object)`. Returns `false` when the triple
    /// already existed, in which case nothing changes.
    pub fn add_edge(&mut self, subject: &ThingId, predicate: PredicateKind, object: &ThingId) -> Result<bool> {
        for id in [subject, object] {
            if !self.nodes.contains_key(id) {
                return Err(Error::UnknownThing(id.clone()));
            }
        }
        let out_key = (object.clone(), predicate);
        let node = self.nodes.get_mut(subject).expect("checked above");
        let pos = match node.out.binary_search(&out_key) {
            Ok(_) => return Ok(false),
            Err(pos) => pos,
        };
        node.out.insert(pos, out_key);
        let in_key = (subject.clone(), predicate);
        let node = self.nodes.get_mut(object).expect("checked above");
        let pos = node.inc.binary_search(&in_key).unwrap_err();
        node.inc.insert(pos, in_key);
        self.edge_count += 1;
        self.version += 1;
        Ok(true)
    }

    pub fn contains(&self, id: &ThingId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn thing(&self, id: &ThingId) -> Option<&Thing> {
        self.nodes.get(id).and_then(|n| n.thing.as_ref())
    }

    pub fn get(&self, id: &ThingId) -> Result<&Thing> {
        self.thing(id).ok_or_else(|| Error::UnknownThing(id.clone()))
    }

    /// All things in id order.
    pub fn things(&self) -> impl Iterator<Item = &Thing> + '_ {
        self.nodes.values().filter_map(|n| n.thing.as_ref())
    }

    /// Ids of all things of one kind, in id order.
    pub fn things_of_kind(&self, kind: ThingKind) -> impl Iterator<Item = &ThingId> + '_ {
        self.by_kind.get(&kind).into_iter().flatten()
    }

    /// All edges sorted by `(subject, predicate, object)`.
    pub fn edges(&self) -> Vec<Edge> {
        let mut edges: Vec<Edge> = self
            .nodes
            .iter()
            .flat_map(|(s, n)| {
                n.out.iter().map(move |(o, p)| Edge {
                    subject: s.clone(),
                    predicate: *p,
                    object: o.clone(),
                })
            })
            .collect();
        edges.sort();
        edges
    }

    pub fn has_edge(&self, subject: &ThingId, predicate: PredicateKind, object: &ThingId) -> bool {
        self.nodes
            .get(subject)
            .is_some_and(|n| n.out.binary_search(&(object.clone(), predicate)).is_ok())
    }

    /// Neighbors sorted by `(ThingId, PredicateKind)`. With `Both`, an edge
    /// pair `a→b`, `b→a` shows up twice, once per direction.
    pub fn neighbors(
        &self,
        id: &ThingId,
        direction: Direction,
        predicate_filter: Option<PredicateKind>,
    ) -> Result<Vec<(PredicateKind, ThingId)>> {
        let node = self.nodes.get(id).ok_or_else(|| Error::UnknownThing(id.clone()))?;
        let keep = |p: &PredicateKind| predicate_filter.is_none_or(|f| f == *p);
        let mut rows: Vec<(ThingId, PredicateKind)> = Vec::new();
        if matches!(direction, Direction::Outgoing | Direction::Both) {
            rows.extend(node.out.iter().filter(|(_, p)| keep(p)).cloned());
        }
        if matches!(direction, Direction::Incoming | Direction::Both) {
            rows.extend(node.inc.iter().filter(|(_, p)| keep(p)).cloned());
        }
        if direction == Direction::Both {
            rows.sort();
        }
        Ok(rows.into_iter().map(|(t, p)| (p, t)).collect())
    }

    /// Allocation-free undirected adjacency: outgoing rows then incoming rows,
    /// each sorted. Used by traversal hot paths.
    pub fn adjacent(&self, id: &ThingId) -> impl Iterator<Item = (PredicateKind, &ThingId)> + '_ {
        self.nodes
            .get(id)
            .into_iter()
            .flat_map(|n| n.out.iter().chain(n.inc.iter()))
            .map(|(t, p)| (*p, t))
    }

    /// Number of incident edges in both directions.
    pub fn degree(&self, id: &ThingId) -> usize {
        self.nodes.get(id).map_or(0, |n| n.out.len() + n.inc.len())
    }

    /// Objects of outgoing edges with the given predicate.
    pub fn out_with(&self, id: &ThingId, predicate: PredicateKind) -> impl Iterator<Item = &ThingId> + '_ {
        self.nodes
            .get(id)
            .into_iter()
            .flat_map(|n| n.out.iter())
            .filter(move |(_, p)| *p == predicate)
            .map(|(t, _)| t)
    }

    /// Subjects of incoming edges with the given predicate.
    pub fn in_with(&self, id: &ThingId, predicate: PredicateKind) -> impl Iterator<Item = &ThingId> + '_ {
        self.nodes
            .get(id)
            .into_iter()
            .flat_map(|n| n.inc.iter())
            .filter(move |(_, p)| *p == predicate)
            .map(|(t, _)| t)
    }
}
