//! Explicit contexts: hierarchy, membership with focus and forgotten
//! subsets, per-user inhibition overlays and the reheat dwell heuristic.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::buoyancy::{global_mb, record_mb, spread_activation, BuoyancyParams, BuoyancyRecord, MbStore};
use crate::error::{Error, Result};
use crate::graph::{Graph, PredicateKind, ThingId, ThingKind, UserId};
use crate::time::{days_between, Timestamp, MINUTE_MS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextParams {
    /// Availability factor applied to suppressed things, in [0, 1).
    pub inhibition_strength: f64,
    /// Magnitude of the spread used to find inhibition candidates.
    pub inhibition_spread_magnitude: f64,
    /// Turning this off keeps overlays empty; stored MB is unaffected either way.
    pub inhibition_enabled: bool,
    pub reheat_actions: u32,
    pub reheat_window_minutes: f64,
    pub reheat_damping: f64,
    pub reheat_bonus: f64,
    pub merge_cooldown_days: f64,
}

impl Default for ContextParams {
    fn default() -> Self {
        ContextParams {
            inhibition_strength: 0.25,
            inhibition_spread_magnitude: 1.0,
            inhibition_enabled: true,
            reheat_actions: 5,
            reheat_window_minutes: 30.0,
            reheat_damping: 0.5,
            reheat_bonus: 0.3,
            merge_cooldown_days: 90.0,
        }
    }
}

impl ContextParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.inhibition_strength)
            && self.inhibition_spread_magnitude > 0.0
            && self.inhibition_spread_magnitude <= 1.0
            && self.reheat_actions >= 1
            && self.reheat_window_minutes > 0.0
            && (0.0..=1.0).contains(&self.reheat_damping)
            && (0.0..=1.0).contains(&self.reheat_bonus)
            && self.merge_cooldown_days >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid context parameters {self:?}")))
        }
    }

    fn window_ms(&self) -> i64 {
        (self.reheat_window_minutes * MINUTE_MS as f64).round() as i64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberState {
    Member,
    Focus,
    Forgotten,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Context {
    pub id: ThingId,
    pub parent: Option<ThingId>,
    pub members: BTreeSet<ThingId>,
    pub focus: BTreeSet<ThingId>,
    pub forgotten: BTreeSet<ThingId>,
    pub last_active: Timestamp,
    pub last_evidence: Option<Timestamp>,
    pub created_at: Timestamp,
    /// Set when this context was folded into its parent; the stub stays resolvable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merged_into: Option<ThingId>,
}

impl Context {
    fn new(id: ThingId, created_at: Timestamp) -> Self {
        Context {
            id,
            parent: None,
            members: BTreeSet::new(),
            focus: BTreeSet::new(),
            forgotten: BTreeSet::new(),
            last_active: created_at,
            last_evidence: None,
            created_at,
            merged_into: None,
        }
    }

    pub fn is_active(&self) -> bool {
        self.merged_into.is_none()
    }

    pub fn state_of(&self, thing: &ThingId) -> Option<MemberState> {
        if !self.members.contains(thing) {
            None
        } else if self.focus.contains(thing) {
            Some(MemberState::Focus)
        } else if self.forgotten.contains(thing) {
            Some(MemberState::Forgotten)
        } else {
            Some(MemberState::Member)
        }
    }

    fn set_state(&mut self, thing: &ThingId, state: MemberState) {
        self.members.insert(thing.clone());
        self.focus.remove(thing);
        self.forgotten.remove(thing);
        match state {
            MemberState::Member => {}
            MemberState::Focus => {
                self.focus.insert(thing.clone());
            }
            MemberState::Forgotten => {
                self.forgotten.insert(thing.clone());
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InhibitionOverlay {
    pub user: UserId,
    pub target_context: ThingId,
    pub suppressed: BTreeMap<ThingId, f64>,
    pub applied_at: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReheatState {
    CasualVisit,
    Working,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReheatAssessment {
    pub state: ReheatState,
    /// True exactly once per working episode.
    pub bonus_due: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Dwell {
    /// The most recent action times, at most `reheat_actions` of them.
    recent: VecDeque<Timestamp>,
    bonus_paid: bool,
}

/// Sliding-window action counter per `(user, context)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DwellTracker {
    entries: HashMap<(UserId, ThingId), Dwell>,
}

impl DwellTracker {
    fn expire(d: &mut Dwell, now: Timestamp, params: &ContextParams) {
        let window = params.window_ms();
        while d.recent.front().is_some_and(|&t| now - t > window) {
            d.recent.pop_front();
        }
        if (d.recent.len() as u32) < params.reheat_actions {
            d.bonus_paid = false;
        }
    }

    /// Current state without recording an action.
    pub fn assess(&self, user: &UserId, context: &ThingId, now: Timestamp, params: &ContextParams) -> ReheatState {
        let window = params.window_ms();
        let count = self
            .entries
            .get(&(user.clone(), context.clone()))
            .map_or(0, |d| d.recent.iter().filter(|&&t| now - t <= window && t <= now).count());
        if count as u32 >= params.reheat_actions {
            ReheatState::Working
        } else {
            ReheatState::CasualVisit
        }
    }

    /// Records one action in `context` and reports the resulting state.
    pub fn record(&mut self, user: &UserId, context: &ThingId, now: Timestamp, params: &ContextParams) -> ReheatAssessment {
        let d = self.entries.entry((user.clone(), context.clone())).or_default();
        Self::expire(d, now, params);
        d.recent.push_back(now);
        while d.recent.len() > params.reheat_actions as usize {
            d.recent.pop_front();
        }
        let working = d.recent.len() as u32 >= params.reheat_actions;
        let bonus_due = working && !d.bonus_paid;
        if bonus_due {
            d.bonus_paid = true;
        }
        ReheatAssessment {
            state: if working {
                ReheatState::Working
            } else {
                ReheatState::CasualVisit
            },
            bonus_due,
        }
    }

    /// Restarts the count at one action (the switch itself).
    pub fn reset(&mut self, user: &UserId, context: &ThingId, now: Timestamp) {
        let d = self.entries.entry((user.clone(), context.clone())).or_default();
        d.recent.clear();
        d.recent.push_back(now);
        d.bonus_paid = false;
    }

    pub fn count(&self, user: &UserId, context: &ThingId) -> usize {
        self.entries.get(&(user.clone(), context.clone())).map_or(0, |d| d.recent.len())
    }
}

/// Free-standing form of [`DwellTracker::assess`].
pub fn assess_reheat(
    tracker: &DwellTracker,
    user: &UserId,
    context: &ThingId,
    now: Timestamp,
    params: &ContextParams,
) -> ReheatState {
    tracker.assess(user, context, now, params)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergeResult {
    pub parent: ThingId,
    pub child: ThingId,
    pub moved_members: usize,
    pub rekeyed_records: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContextRegistry {
    contexts: BTreeMap<ThingId, Context>,
    /// thing → contexts listing it as a member
    member_of: HashMap<ThingId, BTreeSet<ThingId>>,
    overlays: BTreeMap<UserId, InhibitionOverlay>,
    current: BTreeMap<UserId, ThingId>,
    pub dwell: DwellTracker,
}

impl ContextRegistry {
    /// Builds the registry from `kind=context` things, their `part_of`
    /// links to other contexts and incoming `in_context` edges.
    pub fn from_graph(graph: &Graph) -> Result<Self> {
        let mut reg = ContextRegistry::default();
        for id in graph.things_of_kind(ThingKind::Context) {
            let thing = graph.get(id)?;
            reg.contexts.insert(id.clone(), Context::new(id.clone(), thing.created_at));
        }
        let ids: Vec<ThingId> = reg.contexts.keys().cloned().collect();
        for id in &ids {
            let parent = graph
                .out_with(id, PredicateKind::PartOf)
                .find(|p| reg.contexts.contains_key(*p))
                .cloned();
            if let Some(parent) = parent {
                reg.check_no_cycle(id, &parent)?;
                reg.contexts.get_mut(id).expect("registered").parent = Some(parent);
            }
            let members: Vec<ThingId> = graph.in_with(id, PredicateKind::InContext).cloned().collect();
            for m in members {
                reg.contexts.get_mut(id).expect("registered").members.insert(m.clone());
                reg.member_of.entry(m).or_default().insert(id.clone());
            }
        }
        Ok(reg)
    }

    pub fn get(&self, id: &ThingId) -> Option<&Context> {
        self.contexts.get(id)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &Context> + '_ {
        self.contexts.values()
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    /// Active contexts that list `thing` as a member.
    pub fn contexts_of<'a>(&'a self, thing: &ThingId) -> impl Iterator<Item = &'a ThingId> + 'a {
        self.member_of
            .get(thing)
            .into_iter()
            .flatten()
            .filter(move |c| self.contexts.get(*c).is_some_and(Context::is_active))
    }

    pub fn overlay(&self, user: &UserId) -> Option<&InhibitionOverlay> {
        self.overlays.get(user)
    }

    pub fn current(&self, user: &UserId) -> Option<&ThingId> {
        self.current.get(user)
    }

    fn context_mut(&mut self, graph: &Graph, id: &ThingId) -> Result<&mut Context> {
        let thing = graph.get(id)?;
        if thing.kind != ThingKind::Context {
            return Err(Error::NotAContext(id.clone()));
        }
        let created_at = thing.created_at;
        Ok(self
            .contexts
            .entry(id.clone())
            .or_insert_with(|| Context::new(id.clone(), created_at)))
    }

    fn check_no_cycle(&self, child: &ThingId, parent: &ThingId) -> Result<()> {
        let mut cursor = Some(parent);
        let mut steps = 0;
        while let Some(c) = cursor {
            if c == child || steps > self.contexts.len() {
                return Err(Error::ContextCycle {
                    parent: parent.clone(),
                    child: child.clone(),
                });
            }
            cursor = self.contexts.get(c).and_then(|ctx| ctx.parent.as_ref());
            steps += 1;
        }
        Ok(())
    }

    /// Adds a `part_of` link from `child` to `parent`, refusing cycles.
    pub fn set_parent(&mut self, graph: &mut Graph, child: &ThingId, parent: &ThingId) -> Result<()> {
        self.context_mut(graph, parent)?;
        let existing = self.context_mut(graph, child)?.parent.clone();
        match existing {
            Some(p) if &p == parent => return Ok(()),
            Some(p) => {
                return Err(Error::InvalidArgument(format!("`{child}` already has parent `{p}`")));
            }
            None => {}
        }
        self.check_no_cycle(child, parent)?;
        graph.add_edge(child, PredicateKind::PartOf, parent)?;
        self.contexts.get_mut(child).expect("registered").parent = Some(parent.clone());
        Ok(())
    }

    /// Ensures `member` is in `context` with the given state. Focus and
    /// forgotten are disjoint: setting one clears the other.
    pub fn upsert_context_membership(
        &mut self,
        graph: &mut Graph,
        context: &ThingId,
        member: &ThingId,
        state: MemberState,
    ) -> Result<()> {
        self.context_mut(graph, context)?;
        graph.get(member)?;
        graph.add_edge(member, PredicateKind::InContext, context)?;
        self.contexts.get_mut(context).expect("registered").set_state(member, state);
        self.member_of.entry(member.clone()).or_default().insert(context.clone());
        Ok(())
    }

    /// Flags `thing` forgotten in every active context that lists it.
    pub fn mark_forgotten(&mut self, thing: &ThingId) {
        let ctxs: Vec<ThingId> = self.contexts_of(thing).cloned().collect();
        for c in ctxs {
            self.contexts.get_mut(&c).expect("registered").set_state(thing, MemberState::Forgotten);
        }
    }

    /// Clears the forgotten flag of `thing` wherever it is set.
    pub fn mark_recalled(&mut self, thing: &ThingId) {
        let ctxs: Vec<ThingId> = self.contexts_of(thing).cloned().collect();
        for c in ctxs {
            let ctx = self.contexts.get_mut(&c).expect("registered");
            if ctx.forgotten.remove(thing) {
                ctx.set_state(thing, MemberState::Member);
            }
        }
    }

    /// Notes that evidence touched `context` at `now`.
    pub fn touch_evidence(&mut self, context: &ThingId, now: Timestamp) {
        if let Some(c) = self.contexts.get_mut(context) {
            c.last_evidence = Some(c.last_evidence.map_or(now, |t| t.max(now)));
        }
    }

    /// Releases the user's overlay, then inhibits things reached from
    /// `target` that belong only to other contexts.
    pub fn switch_context(
        &mut self,
        graph: &Graph,
        user: &UserId,
        target: &ThingId,
        now: Timestamp,
        params: BuoyancyParams<'_>,
        ctx_params: &ContextParams,
    ) -> Result<&InhibitionOverlay> {
        let thing = graph.get(target)?;
        if thing.kind != ThingKind::Context {
            return Err(Error::NotAContext(target.clone()));
        }
        if !thing.accessible_to(user) {
            return Err(Error::Inaccessible {
                user: user.to_string(),
                thing: target.clone(),
            });
        }
        self.context_mut(graph, target)?;
        self.dwell.reset(user, target, now);
        if self.current.get(user) == Some(target) && self.overlays.contains_key(user) {
            return Ok(&self.overlays[user]);
        }

        self.overlays.remove(user);
        let mut suppressed = BTreeMap::new();
        if ctx_params.inhibition_enabled {
            let reached = spread_activation(graph, target, ctx_params.inhibition_spread_magnitude, params.spread)?;
            let target_ctx = &self.contexts[target];
            for id in reached.keys() {
                if id == target || target_ctx.members.contains(id) {
                    continue;
                }
                let in_other = self.contexts_of(id).any(|c| c != target);
                if in_other && graph.thing(id).is_some_and(|t| t.accessible_to(user)) {
                    suppressed.insert(id.clone(), ctx_params.inhibition_strength);
                }
            }
        }
        self.contexts.get_mut(target).expect("registered").last_active = now;
        self.current.insert(user.clone(), target.clone());
        let overlay = InhibitionOverlay {
            user: user.clone(),
            target_context: target.clone(),
            suppressed,
            applied_at: now,
        };
        Ok(self.overlays.entry(user.clone()).or_insert(overlay))
    }

    /// Drops the user's overlay; returns it if there was one.
    pub fn release(&mut self, user: &UserId) -> Option<InhibitionOverlay> {
        self.current.remove(user);
        self.overlays.remove(user)
    }

    pub fn suppression(&self, user: &UserId, thing: &ThingId) -> Option<f64> {
        self.overlays.get(user).and_then(|o| o.suppressed.get(thing).copied())
    }

    /// Global MB times the overlay factor; never mutates stored state.
    pub fn effective_availability(
        &self,
        store: &MbStore,
        graph: &Graph,
        params: BuoyancyParams<'_>,
        user: &UserId,
        thing: &ThingId,
        now: Timestamp,
    ) -> f64 {
        let mb = global_mb(store, graph, params, user, thing, now);
        match self.suppression(user, thing) {
            Some(f) => mb * f,
            None => mb,
        }
    }

    /// Folds an idle direct child into its parent. The child stays as a
    /// stub pointing at the parent; its local MB records move to the parent
    /// key, keeping the larger of the two values per thing.
    #[allow(clippy::too_many_arguments)]
    pub fn merge_contexts(
        &mut self,
        graph: &mut Graph,
        store: &mut MbStore,
        parent: &ThingId,
        child: &ThingId,
        now: Timestamp,
        params: BuoyancyParams<'_>,
        ctx_params: &ContextParams,
    ) -> Result<MergeResult> {
        self.context_mut(graph, parent)?;
        self.context_mut(graph, child)?;
        let (p, c) = (&self.contexts[parent], &self.contexts[child]);
        if c.parent.as_ref() != Some(parent) || !p.is_active() || !c.is_active() {
            return Err(Error::NotParentChild {
                parent: parent.clone(),
                child: child.clone(),
            });
        }
        let cooldown = ctx_params.merge_cooldown_days;
        for ctx in [p, c] {
            let idle = days_between(ctx.last_active, now);
            if idle < cooldown {
                return Err(Error::CooldownNotElapsed {
                    context: ctx.id.clone(),
                    days: idle,
                    cooldown,
                });
            }
        }
        for ctx in [p, c] {
            if let Some(t) = ctx.last_evidence {
                let days = days_between(t, now);
                if days < cooldown {
                    return Err(Error::RecentEvidence {
                        context: ctx.id.clone(),
                        days,
                    });
                }
            }
        }

        let child_key = Some(child.clone());
        let parent_key = Some(parent.clone());
        let moving: Vec<(UserId, ThingId, BuoyancyRecord)> = store
            .entries()
            .into_iter()
            .filter(|(_, _, ctx, _)| **ctx == child_key)
            .map(|(u, t, _, r)| (u.clone(), t.clone(), *r))
            .collect();
        for (_, _, rec) in &moving {
            if now < rec.last_update {
                return Err(Error::ClockRegression {
                    now,
                    last_update: rec.last_update,
                });
            }
        }
        for (u, t, _) in &moving {
            if let Some(rec) = store.get(u, t, &parent_key) {
                if now < rec.last_update {
                    return Err(Error::ClockRegression {
                        now,
                        last_update: rec.last_update,
                    });
                }
            }
        }

        let child_ctx = self.contexts.get(child).expect("registered").clone();
        for m in &child_ctx.members {
            graph.add_edge(m, PredicateKind::InContext, parent)?;
            let incoming = child_ctx.state_of(m).expect("member");
            let pctx = self.contexts.get_mut(parent).expect("registered");
            let state = match pctx.state_of(m) {
                None | Some(MemberState::Member) => incoming,
                Some(s) => s,
            };
            pctx.set_state(m, state);
            let ctxs = self.member_of.entry(m.clone()).or_default();
            ctxs.insert(parent.clone());
        }

        let rekeyed = moving.len();
        for (u, t, rec) in moving {
            store.remove(&u, &t, &child_key);
            let thing = graph.get(&t)?;
            let from_child = record_mb(&rec, thing, params, now);
            let merged = match store.get(&u, &t, &parent_key).copied() {
                Some(existing) => {
                    let from_parent = record_mb(&existing, thing, params, now);
                    BuoyancyRecord {
                        value: from_child.max(from_parent),
                        last_update: now,
                        reinforcement: rec.reinforcement.max(existing.reinforcement),
                        last_reinforced_day: rec.last_reinforced_day.max(existing.last_reinforced_day),
                    }
                }
                None => BuoyancyRecord {
                    value: from_child,
                    last_update: now,
                    ..rec
                },
            };
            store.insert(&u, &t, parent_key.clone(), merged);
        }

        let stub = self.contexts.get_mut(child).expect("registered");
        stub.merged_into = Some(parent.clone());
        let moved = stub.members.len();
        stub.members.clear();
        stub.focus.clear();
        stub.forgotten.clear();
        for m in &child_ctx.members {
            if let Some(set) = self.member_of.get_mut(m) {
                set.remove(child);
            }
        }
        for overlay in self.overlays.values_mut() {
            if &overlay.target_context == child {
                overlay.target_context = parent.clone();
            }
        }
        for cur in self.current.values_mut() {
            if cur == child {
                *cur = parent.clone();
            }
        }
        Ok(MergeResult {
            parent: parent.clone(),
            child: child.clone(),
            moved_members: moved,
            rekeyed_records: rekeyed,
        })
    }
}
