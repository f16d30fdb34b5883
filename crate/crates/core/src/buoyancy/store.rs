use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{spread_activation, BuoyancyParams};
use crate::error::{Error, Result};
use crate::evidence::StimulationRequest;
use crate::graph::{Graph, Thing, ThingId, ThingKind, UserId};
use crate::time::{day_index, days_between, Timestamp};

use super::decay::MAX_REINFORCEMENT;

/// Lazily decayed memory buoyancy state for one `(user, thing, context)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuoyancyRecord {
    /// MB at `last_update`, in [0, 1].
    pub value: f64,
    pub last_update: Timestamp,
    /// Distinct calendar days on which the thing was the direct target.
    pub reinforcement: u32,
    pub last_reinforced_day: Option<i64>,
}

/// `None` is the record used for stimulations without an active context.
pub type ContextKey = Option<ThingId>;

/// Local MB records keyed by `(user, thing, context)`. A missing key means
/// MB 0 for that triple.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MbStore {
    users: BTreeMap<UserId, HashMap<ThingId, Vec<(ContextKey, BuoyancyRecord)>>>,
}

impl MbStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, user: &UserId, thing: &ThingId, context: &ContextKey) -> Option<&BuoyancyRecord> {
        let locals = self.locals(user, thing);
        locals
            .binary_search_by(|(c, _)| c.cmp(context))
            .ok()
            .map(|i| &locals[i].1)
    }

    /// All local records of a `(user, thing)`, sorted by context.
    pub fn locals(&self, user: &UserId, thing: &ThingId) -> &[(ContextKey, BuoyancyRecord)] {
        self.users
            .get(user)
            .and_then(|m| m.get(thing))
            .map_or(&[], Vec::as_slice)
    }

    pub fn insert(&mut self, user: &UserId, thing: &ThingId, context: ContextKey, record: BuoyancyRecord) {
        let locals = self
            .users
            .entry(user.clone())
            .or_default()
            .entry(thing.clone())
            .or_default();
        match locals.binary_search_by(|(c, _)| c.cmp(&context)) {
            Ok(i) => locals[i].1 = record,
            Err(i) => locals.insert(i, (context, record)),
        }
    }

    pub fn remove(&mut self, user: &UserId, thing: &ThingId, context: &ContextKey) -> Option<BuoyancyRecord> {
        let per_user = self.users.get_mut(user)?;
        let locals = per_user.get_mut(thing)?;
        let i = locals.binary_search_by(|(c, _)| c.cmp(context)).ok()?;
        let (_, rec) = locals.remove(i);
        if locals.is_empty() {
            per_user.remove(thing);
        }
        Some(rec)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> + '_ {
        self.users.keys()
    }

    /// Things with at least one record for `user`, unordered.
    pub fn things_of(&self, user: &UserId) -> impl Iterator<Item = &ThingId> + '_ {
        self.users.get(user).into_iter().flat_map(|m| m.keys())
    }

    pub fn len(&self) -> usize {
        self.users.values().flat_map(|m| m.values()).map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every record sorted by `(user, thing, context)`.
    pub fn entries(&self) -> Vec<(&UserId, &ThingId, &ContextKey, &BuoyancyRecord)> {
        let mut out = Vec::with_capacity(self.len());
        for (user, things) in &self.users {
            let mut ids: Vec<&ThingId> = things.keys().collect();
            ids.sort();
            for id in ids {
                for (ctx, rec) in &things[id] {
                    out.push((user, id, ctx, rec));
                }
            }
        }
        out
    }
}

/// MB of a stored record at `now`, applying the kind's profile, the
/// post-event acceleration and the kind floor. Reads before `last_update`
/// return the stored value.
pub fn record_mb(record: &BuoyancyRecord, thing: &Thing, params: BuoyancyParams<'_>, now: Timestamp) -> f64 {
    let profile = params.decay.get(thing.kind);
    let now = now.max(record.last_update);
    let decayed = match thing.event_date().filter(|_| thing.kind == ThingKind::Event) {
        Some(date) if record.last_update < date && date < now => {
            let before = record.value * profile.retention(days_between(record.last_update, date), record.reinforcement);
            let fast = profile.accelerated(params.schedule.post_event_factor);
            before * fast.retention(days_between(date, now), record.reinforcement)
        }
        _ => record.value * profile.retention(days_between(record.last_update, now), record.reinforcement),
    };
    let floor = profile.min_mb.min(record.value);
    decayed.max(floor).clamp(0.0, 1.0)
}

/// Decays every touched record to `req.at`, adds the spread deltas (clamped
/// at 1) and counts a reinforcement on the target once per calendar day.
/// Only records keyed by `req.context` are read or written, and only things
/// accessible to `req.user` are touched.
pub fn apply_stimulation(
    store: &mut MbStore,
    graph: &Graph,
    req: &StimulationRequest,
    params: BuoyancyParams<'_>,
) -> Result<BTreeSet<ThingId>> {
    if !(req.magnitude > 0.0 && req.magnitude <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "stimulation magnitude must be in (0, 1], got {}",
            req.magnitude
        )));
    }
    let deltas = spread_activation(graph, &req.target, req.magnitude, params.spread)?;
    let mut updates = Vec::with_capacity(deltas.len());
    for (id, delta) in deltas {
        let thing = graph.get(&id)?;
        if !thing.accessible_to(&req.user) {
            continue;
        }
        let existing = store.get(&req.user, &id, &req.context).copied();
        if let Some(rec) = existing {
            if req.at < rec.last_update {
                return Err(Error::ClockRegression {
                    now: req.at,
                    last_update: rec.last_update,
                });
            }
        }
        updates.push((id, delta, thing, existing));
    }

    let today = day_index(req.at);
    let mut touched = BTreeSet::new();
    for (id, delta, thing, existing) in updates {
        let mut rec = existing.unwrap_or(BuoyancyRecord {
            value: 0.0,
            last_update: req.at,
            reinforcement: 0,
            last_reinforced_day: None,
        });
        let current = record_mb(&rec, thing, params, req.at);
        rec.value = (current + delta).min(1.0);
        rec.last_update = req.at;
        if id == req.target && rec.last_reinforced_day != Some(today) {
            rec.reinforcement = (rec.reinforcement + 1).min(MAX_REINFORCEMENT);
            rec.last_reinforced_day = Some(today);
        }
        store.insert(&req.user, &id, req.context.clone(), rec);
        touched.insert(id);
    }
    Ok(touched)
}

/// Local MB for `(user, thing, context)`; with no context, the global MB.
pub fn mb_at(
    store: &MbStore,
    graph: &Graph,
    params: BuoyancyParams<'_>,
    user: &UserId,
    thing: &ThingId,
    context: Option<&ThingId>,
    now: Timestamp,
) -> f64 {
    match context {
        Some(ctx) => local_mb(store, graph, params, user, thing, &Some(ctx.clone()), now),
        None => global_mb(store, graph, params, user, thing, now),
    }
}

/// MB of one local record, including the no-context record (`None`).
pub fn local_mb(
    store: &MbStore,
    graph: &Graph,
    params: BuoyancyParams<'_>,
    user: &UserId,
    thing: &ThingId,
    context: &ContextKey,
    now: Timestamp,
) -> f64 {
    let Some(t) = graph.thing(thing).filter(|t| t.accessible_to(user)) else {
        return 0.0;
    };
    store
        .get(user, thing, context)
        .map_or(0.0, |rec| record_mb(rec, t, params, now))
}

/// Maximum over all local records of `(user, thing)`; 0 when there are none.
pub fn global_mb(
    store: &MbStore,
    graph: &Graph,
    params: BuoyancyParams<'_>,
    user: &UserId,
    thing: &ThingId,
    now: Timestamp,
) -> f64 {
    let Some(t) = graph.thing(thing).filter(|t| t.accessible_to(user)) else {
        return 0.0;
    };
    store
        .locals(user, thing)
        .iter()
        .map(|(_, rec)| record_mb(rec, t, params, now))
        .fold(0.0, f64::max)
}

/// Arithmetic mean of the users' global MB.
pub fn group_mb(
    store: &MbStore,
    graph: &Graph,
    params: BuoyancyParams<'_>,
    users: &[UserId],
    thing: &ThingId,
    now: Timestamp,
) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::EmptyUserSet);
    }
    let sum: f64 = users
        .iter()
        .map(|u| global_mb(store, graph, params, u, thing, now))
        .sum();
    Ok(sum / users.len() as f64)
}
