//! Condensation of low-buoyancy graph regions and the monthly diary.
//!
//! Condensing never removes things or edges; it records a representation
//! (top-k members by MB plus references to all members) and flags the
//! members forgotten in their contexts.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::io::Write;

use chrono::{DateTime, Datelike, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::buoyancy::{global_mb, BuoyancyParams, MbStore};
use crate::context::ContextRegistry;
use crate::error::{Error, Result};
use crate::evidence::Evidence;
use crate::graph::{Graph, ThingId, UserId};
use crate::time::Timestamp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CondenseParams {
    /// Representatives kept per condensation.
    pub k: usize,
    /// Global MB below which a thing may join a region.
    pub theta: f64,
    pub min_size: usize,
}

impl Default for CondenseParams {
    fn default() -> Self {
        CondenseParams {
            k: 3,
            theta: 0.05,
            min_size: 3,
        }
    }
}

impl CondenseParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || !(self.theta > 0.0 && self.theta < 1.0) || self.min_size == 0 {
            return Err(Error::InvalidConfig(format!("invalid condense parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condensation {
    pub id: String,
    pub period: [Timestamp; 2],
    /// Highest MB first.
    pub representatives: Vec<ThingId>,
    pub references: BTreeSet<ThingId>,
    pub created_at: Timestamp,
}

/// Stable identifier derived from the reference set alone.
pub fn condensation_id(references: &BTreeSet<ThingId>) -> String {
    let mut h = Sha256::new();
    for r in references {
        h.update(r.as_str().as_bytes());
        h.update([0u8]);
    }
    format!("condensation:{}", &hex::encode(h.finalize())[..32])
}

/// Connected components (ignoring edge direction) of things accessible to
/// `user`, created by `now`, whose global MB is below `theta`; only
/// components with at least `min_size` members. Ordered by smallest member.
#[allow(clippy::too_many_arguments)]
pub fn detect_forgettable_regions(
    graph: &Graph,
    store: &MbStore,
    params: BuoyancyParams<'_>,
    user: &UserId,
    now: Timestamp,
    theta: f64,
    min_size: usize,
) -> Result<Vec<BTreeSet<ThingId>>> {
    detect_regions_excluding(graph, store, params, user, now, theta, min_size, |_| false)
}

/// [`detect_forgettable_regions`] over the things for which `exclude` is false.
#[allow(clippy::too_many_arguments)]
pub fn detect_regions_excluding(
    graph: &Graph,
    store: &MbStore,
    params: BuoyancyParams<'_>,
    user: &UserId,
    now: Timestamp,
    theta: f64,
    min_size: usize,
    exclude: impl Fn(&ThingId) -> bool,
) -> Result<Vec<BTreeSet<ThingId>>> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("theta must be in (0, 1), got {theta}")));
    }
    let low: HashSet<&ThingId> = graph
        .things()
        .filter(|t| t.created_at <= now && t.accessible_to(user) && !exclude(&t.id))
        .filter(|t| global_mb(store, graph, params, user, &t.id, now) < theta)
        .map(|t| &t.id)
        .collect();
    Ok(components(graph, &low)
        .into_iter()
        .filter(|c| c.len() >= min_size)
        .collect())
}

/// Components of the subgraph induced by `nodes`, ordered by smallest id.
fn components(graph: &Graph, nodes: &HashSet<&ThingId>) -> Vec<BTreeSet<ThingId>> {
    let mut sorted: Vec<&ThingId> = nodes.iter().copied().collect();
    sorted.sort();
    let mut seen: HashSet<&ThingId> = HashSet::new();
    let mut out = Vec::new();
    for start in sorted {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            comp.insert(n.clone());
            for (_, m) in graph.adjacent(n) {
                if nodes.contains(m) && seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Top-`k` members by global MB, ties broken by id.
fn representatives(
    graph: &Graph,
    store: &MbStore,
    params: BuoyancyParams<'_>,
    user: &UserId,
    members: &BTreeSet<ThingId>,
    k: usize,
    now: Timestamp,
) -> Vec<ThingId> {
    let mut scored: Vec<(f64, &ThingId)> = members
        .iter()
        .map(|id| (global_mb(store, graph, params, user, id, now), id))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id.clone()).collect()
}

/// Condensations created so far, keyed by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CondensationStore {
    by_id: BTreeMap<String, Condensation>,
}

impl CondensationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &str) -> Option<&Condensation> {
        self.by_id.get(id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Condensation> + '_ {
        self.by_id.values()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write_condensations(self.by_id.values(), &mut out)
    }
}

pub fn write_condensations<'a, W: Write>(
    items: impl IntoIterator<Item = &'a Condensation>,
    mut out: W,
) -> std::io::Result<()> {
    for c in items {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Condenses `region`, or returns the existing condensation of the same
/// member set. Members are flagged forgotten in their contexts; nothing
/// is removed from the graph.
#[allow(clippy::too_many_arguments)]
pub fn condense_region(
    graph: &Graph,
    store: &MbStore,
    params: BuoyancyParams<'_>,
    user: &UserId,
    region: &BTreeSet<ThingId>,
    k: usize,
    now: Timestamp,
    contexts: &mut ContextRegistry,
    condensations: &mut CondensationStore,
) -> Result<Condensation> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    for id in region {
        graph.get(id)?;
    }
    let id = condensation_id(region);
    if let Some(existing) = condensations.get(&id) {
        return Ok(existing.clone());
    }
    let start = region
        .iter()
        .filter_map(|id| graph.thing(id))
        .map(|t| t.created_at)
        .min()
        .unwrap_or(now)
        .min(now);
    let c = Condensation {
        id: id.clone(),
        period: [start, now],
        representatives: representatives(graph, store, params, user, region, k, now),
        references: region.clone(),
        created_at: now,
    };
    for m in region {
        contexts.mark_forgotten(m);
    }
    condensations.by_id.insert(id, c.clone());
    Ok(c)
}

fn month_key(ts: Timestamp) -> (i32, u32) {
    let dt: DateTime<Utc> = Utc.timestamp_millis_opt(ts).single().unwrap_or_default();
    (dt.year(), dt.month())
}

fn month_bounds((year, month): (i32, u32)) -> (Timestamp, Timestamp) {
    let start = Utc
        .with_ymd_and_hms(year, month, 1, 0, 0, 0)
        .single()
        .map_or(0, |d| d.timestamp_millis());
    let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    let next = Utc
        .with_ymd_and_hms(ny, nm, 1, 0, 0, 0)
        .single()
        .map_or(i64::MAX, |d| d.timestamp_millis());
    (start, next - 1)
}

/// One condensation per calendar month (UTC) of the things `user` touched
/// in `[start, end]`, each thing in the month of its first touch.
/// Chronological; flags nothing.
#[allow(clippy::too_many_arguments)]
pub fn generate_diary(
    graph: &Graph,
    store: &MbStore,
    params: BuoyancyParams<'_>,
    user: &UserId,
    evidence: &[Evidence],
    start: Timestamp,
    end: Timestamp,
    k: usize,
    now: Timestamp,
) -> Result<Vec<Condensation>> {
    if start > end {
        return Err(Error::InvalidPeriod { start, end });
    }
    let mut first_touch: BTreeMap<&ThingId, Timestamp> = BTreeMap::new();
    for e in evidence {
        if &e.user != user || e.ts < start || e.ts > end {
            continue;
        }
        if !graph.thing(&e.thing).is_some_and(|t| t.accessible_to(user)) {
            continue;
        }
        let slot = first_touch.entry(&e.thing).or_insert(e.ts);
        *slot = (*slot).min(e.ts);
    }
    let mut buckets: BTreeMap<(i32, u32), BTreeSet<ThingId>> = BTreeMap::new();
    for (id, ts) in first_touch {
        buckets.entry(month_key(ts)).or_default().insert(id.clone());
    }
    Ok(buckets
        .into_iter()
        .map(|(month, refs)| {
            let (ms, me) = month_bounds(month);
            Condensation {
                id: condensation_id(&refs),
                period: [ms.max(start), me.min(end)],
                representatives: representatives(graph, store, params, user, &refs, k, now),
                references: refs,
                created_at: now,
            }
        })
        .collect())
}
