//! Time-driven heuristics run by the replay at day granularity.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{apply_stimulation, BuoyancyParams, MbStore};
use crate::error::{Error, Result};
use crate::evidence::StimulationRequest;
use crate::graph::{Graph, ThingId, ThingKind};
use crate::time::{days_between, Timestamp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleParams {
    /// Events this many days ahead start receiving synthetic stimulation.
    pub event_horizon_days: f64,
    /// Synthetic magnitude on the event's date.
    pub event_magnitude: f64,
    /// Steep-rate multiplier once an event's date has passed without new stimulation.
    pub post_event_factor: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            event_horizon_days: 14.0,
            event_magnitude: 0.5,
            post_event_factor: 3.0,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.event_horizon_days > 0.0)
            || !(self.event_magnitude > 0.0 && self.event_magnitude <= 1.0)
            || !(self.post_event_factor >= 1.0)
        {
            return Err(Error::InvalidConfig(format!("invalid schedule parameters {self:?}")));
        }
        Ok(())
    }

    /// `m_event · (1 − days_until / horizon)` inside the horizon, else `None`.
    pub fn approach_magnitude(&self, days_until: f64) -> Option<f64> {
        if !(0.0..=self.event_horizon_days).contains(&days_until) {
            return None;
        }
        let m = self.event_magnitude * (1.0 - days_until / self.event_horizon_days);
        (m > 0.0).then_some(m.min(1.0))
    }
}

/// Direct scheduled stimulations due at `now`: every upcoming event inside
/// the horizon, once per user with access. Finished tasks are never a
/// direct target.
pub fn scheduled_stimulations(graph: &Graph, now: Timestamp, params: &ScheduleParams) -> Vec<StimulationRequest> {
    let mut out = Vec::new();
    for id in graph.things_of_kind(ThingKind::Event) {
        let Some(thing) = graph.thing(id) else { continue };
        if thing.is_finished_task() {
            continue;
        }
        let Some(date) = thing.event_date() else { continue };
        let Some(magnitude) = params.approach_magnitude(days_between(now, date)) else {
            continue;
        };
        for user in thing.access_set() {
            out.push(StimulationRequest {
                target: id.clone(),
                magnitude,
                at: now,
                context: None,
                user,
            });
        }
    }
    out
}

/// Applies the scheduled stimulations due at `now` (each spreads to
/// connected things). Post-event acceleration is applied lazily on read.
pub fn tick_scheduled(
    store: &mut MbStore,
    graph: &Graph,
    now: Timestamp,
    params: BuoyancyParams<'_>,
) -> Result<BTreeSet<ThingId>> {
    let mut touched = BTreeSet::new();
    for req in scheduled_stimulations(graph, now, params.schedule) {
        touched.extend(apply_stimulation(store, graph, &req, params)?);
    }
    Ok(touched)
}
