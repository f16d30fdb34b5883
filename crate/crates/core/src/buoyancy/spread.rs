//! Level-synchronous spreading activation over the undirected view of the graph.
//!
//! Level 0 is the source. A node that fired at level `d − 1` with delta `δ`
//! sends `δ · decay · w(p) · k(kind) / fanout^γ` across each incident edge to
//! every node not reached at an earlier level; contributions arriving at the
//! same level add up (capped at the source magnitude). Nodes whose delta
//! stays below the firing threshold are dropped and do not propagate;
//! nothing propagates past `max_depth`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, PredicateKind, ThingId, ThingKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpreadParams {
    /// Per-hop attenuation, in (0, 1).
    pub decay_factor: f64,
    /// Missing predicates fall back to the built-in weight.
    pub predicate_weights: BTreeMap<PredicateKind, f64>,
    /// Missing kinds use a modifier of 1.
    pub kind_modifiers: BTreeMap<ThingKind, f64>,
    pub fanout_exponent: f64,
    pub firing_threshold: f64,
    pub max_depth: u32,
}

impl Default for SpreadParams {
    fn default() -> Self {
        SpreadParams {
            decay_factor: 0.5,
            predicate_weights: default_predicate_weights(),
            kind_modifiers: BTreeMap::new(),
            fanout_exponent: 0.5,
            firing_threshold: 0.01,
            max_depth: 4,
        }
    }
}

pub fn default_predicate_weights() -> BTreeMap<PredicateKind, f64> {
    BTreeMap::from([
        (PredicateKind::RelatesTo, 0.5),
        (PredicateKind::PartOf, 0.9),
        (PredicateKind::AnnotatedWith, 0.7),
        (PredicateKind::AttendedBy, 0.6),
        (PredicateKind::AttachmentOf, 0.9),
        (PredicateKind::HasTopic, 0.8),
        (PredicateKind::InContext, 0.6),
    ])
}

impl SpreadParams {
    pub fn predicate_weight(&self, p: PredicateKind) -> f64 {
        match self.predicate_weights.get(&p) {
            Some(w) => *w,
            None => default_predicate_weights()[&p],
        }
    }

    pub fn kind_modifier(&self, k: ThingKind) -> f64 {
        self.kind_modifiers.get(&k).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidConfig(format!("spread: {what}")));
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return bad(format!("decay_factor must be in (0, 1), got {}", self.decay_factor));
        }
        if !(self.firing_threshold > 0.0) {
            return bad(format!("firing_threshold must be > 0, got {}", self.firing_threshold));
        }
        if !(0.0..=1.0).contains(&self.fanout_exponent) {
            return bad(format!("fanout_exponent must be in [0, 1], got {}", self.fanout_exponent));
        }
        if let Some((p, w)) = self.predicate_weights.iter().find(|(_, w)| !(0.0..=1.0).contains(*w)) {
            return bad(format!("predicate weight for {p} must be in [0, 1], got {w}"));
        }
        if let Some((k, m)) = self.kind_modifiers.iter().find(|(_, m)| !(**m >= 0.0)) {
            return bad(format!("kind modifier for {k} must be >= 0, got {m}"));
        }
        Ok(())
    }
}

/// Spreads `magnitude` from `source`; the result always contains the source
/// with its full magnitude.
pub fn spread_activation(
    graph: &Graph,
    source: &ThingId,
    magnitude: f64,
    params: &SpreadParams,
) -> Result<BTreeMap<ThingId, f64>> {
    if !graph.contains(source) {
        return Err(Error::UnknownThing(source.clone()));
    }
    let mut result = BTreeMap::new();
    result.insert(source.clone(), magnitude);

    let mut reached: HashSet<&ThingId> = HashSet::from([source]);
    let mut frontier: Vec<(&ThingId, f64)> = Vec::new();
    if magnitude >= params.firing_threshold {
        frontier.push((source, magnitude));
    }
    let mut depth = 0;
    while !frontier.is_empty() && depth < params.max_depth {
        depth += 1;
        let mut level: BTreeMap<&ThingId, f64> = BTreeMap::new();
        for &(node, delta) in &frontier {
            let norm = (graph.degree(node) as f64).powf(params.fanout_exponent);
            let base = delta * params.decay_factor / norm;
            for (predicate, neighbor) in graph.adjacent(node) {
                if reached.contains(neighbor) {
                    continue;
                }
                let kind = match graph.thing(neighbor) {
                    Some(t) => t.kind,
                    None => continue,
                };
                let contribution = base * params.predicate_weight(predicate) * params.kind_modifier(kind);
                if contribution > 0.0 {
                    *level.entry(neighbor).or_insert(0.0) += contribution;
                }
            }
        }
        frontier.clear();
        for (node, delta) in level {
            reached.insert(node);
            let delta = delta.min(magnitude);
            if delta >= params.firing_threshold {
                result.insert(node.clone(), delta);
                frontier.push((node, delta));
            }
        }
    }
    Ok(result)
}
