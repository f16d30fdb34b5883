//! The event loop state: graph, MB store, contexts, policy state and audit
//! log, advanced one evidence record at a time.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::buoyancy::{apply_stimulation, global_mb, group_mb, local_mb, mb_at, tick_scheduled, MbStore};
use crate::condense::{condense_region, detect_regions_excluding, CondensationStore};
use crate::config::Config;
use crate::context::ContextRegistry;
use crate::error::{Error, Result};
use crate::evidence::{ActionKind, Evidence, StimulationRequest};
use crate::graph::{Graph, ThingId, ThingKind, UserId};
use crate::policy::{
    apply_proposals, on_access_restore, plan_owner_sync, sync_proposals, AuditLog, MbScope, PolicyEvaluator,
    PolicyState,
};
use crate::search::{SearchIndex, SearchResult};
use crate::time::{day_index, Timestamp, DAY_MS};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineStats {
    pub events: u64,
    pub stimulations: u64,
    pub skipped_unknown: u64,
    pub context_switches: u64,
    pub damped_stimulations: u64,
    pub reheat_bonuses: u64,
    pub restores: u64,
    pub searches: u64,
    /// Searches where at least one match was hidden.
    pub searches_with_hidden: u64,
    /// Searches with matches but nothing shown.
    pub searches_all_hidden: u64,
    pub hidden_results: u64,
    pub days_ticked: u64,
    pub scheduled_touches: u64,
    pub policy_evaluations: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvidenceOutcome {
    Stimulated { touched: usize },
    Switched { suppressed: usize },
    Searched { shown: usize, hidden: usize },
    /// The evidence referenced a thing or context not in the graph.
    Skipped,
}

pub struct Engine {
    pub graph: Graph,
    pub config: Config,
    pub store: MbStore,
    pub contexts: ContextRegistry,
    pub policy: PolicyState,
    pub audit: AuditLog,
    pub evaluator: PolicyEvaluator,
    pub condensations: CondensationStore,
    pub stats: EngineStats,
    condensed_refs: HashSet<(UserId, ThingId)>,
    touched: HashSet<ThingId>,
    users: BTreeSet<UserId>,
    index: Option<SearchIndex>,
    clock: Option<Timestamp>,
    first_day: Option<i64>,
    last_day: Option<i64>,
}

impl Engine {
    pub fn new(graph: Graph, config: Config) -> Result<Self> {
        config.validate()?;
        let contexts = ContextRegistry::from_graph(&graph)?;
        let policy = PolicyState::from_graph(&graph);
        Ok(Engine {
            graph,
            config,
            store: MbStore::new(),
            contexts,
            policy,
            audit: AuditLog::new(),
            evaluator: PolicyEvaluator::new(),
            condensations: CondensationStore::new(),
            stats: EngineStats::default(),
            condensed_refs: HashSet::new(),
            touched: HashSet::new(),
            users: BTreeSet::new(),
            index: None,
            clock: None,
            first_day: None,
            last_day: None,
        })
    }

    /// Time of the last processed evidence or tick.
    pub fn now(&self) -> Option<Timestamp> {
        self.clock
    }

    pub fn things_touched(&self) -> usize {
        self.touched.len()
    }

    /// Users seen in evidence so far.
    pub fn users(&self) -> &BTreeSet<UserId> {
        &self.users
    }

    /// Runs the day-boundary work (scheduled stimulation, policy, condensation)
    /// for every day from the last processed one up to the day of `ts`.
    pub fn advance_to(&mut self, ts: Timestamp) -> Result<()> {
        if let Some(now) = self.clock {
            if ts < now {
                return Err(Error::ClockRegression { now: ts, last_update: now });
            }
        }
        let target = day_index(ts);
        let start = self.last_day.map_or(target, |d| d + 1);
        for day in start..=target {
            self.day_tick(day)?;
        }
        self.clock = Some(self.clock.map_or(ts, |c| c.max(ts)));
        Ok(())
    }

    fn day_tick(&mut self, day: i64) -> Result<()> {
        let at = day * DAY_MS;
        let first = *self.first_day.get_or_insert(day);
        self.last_day = Some(day);
        self.clock = Some(self.clock.map_or(at, |c| c.max(at)));
        self.stats.days_ticked += 1;
        let touched = tick_scheduled(&mut self.store, &self.graph, at, self.config.buoyancy())?;
        self.stats.scheduled_touches += touched.len() as u64;
        self.touched.extend(touched);

        let elapsed = (day - first) as u64;
        if elapsed.is_multiple_of(u64::from(self.config.policy.evaluation_cadence_days)) {
            self.evaluate_policy(at);
        }
        let every = u64::from(self.config.replay.condense_every_days);
        if every > 0 && elapsed > 0 && elapsed.is_multiple_of(every) {
            self.run_condensation(at)?;
        }
        Ok(())
    }

    /// MB the policy compares against its thresholds: the owner's view.
    fn policy_mb(&self, thing: &ThingId, owner: &UserId, now: Timestamp) -> f64 {
        let p = self.config.buoyancy();
        match self.config.policy.mb_scope {
            MbScope::Global => global_mb(&self.store, &self.graph, p, owner, thing, now),
            MbScope::Local => {
                let ctx = self.contexts.current(owner).cloned();
                local_mb(&self.store, &self.graph, p, owner, thing, &ctx, now)
            }
        }
    }

    /// Escalation and adaptive synchronisation for every existing thing.
    pub fn evaluate_policy(&mut self, now: Timestamp) {
        self.stats.policy_evaluations += 1;
        let device = self.config.replay.device;
        let params = self.config.policy.clone();
        let policy = params.device(device).clone();
        let mut proposals = Vec::new();
        for thing in self.graph.things() {
            if thing.created_at > now {
                continue;
            }
            let mb = self.policy_mb(&thing.id, &thing.owner, now);
            proposals.extend(self.evaluator.evaluate(thing, mb, &self.policy, &policy, &params, now));
        }
        apply_proposals(&mut self.policy, &proposals, &mut self.audit, &params);

        let plan = plan_owner_sync(&self.graph, &self.store, &self.policy, device, self.config.buoyancy(), &params, now);
        let props = sync_proposals(&plan, &policy, now);
        apply_proposals(&mut self.policy, &props, &mut self.audit, &params);
    }

    /// Condenses newly forgettable regions for every user seen so far.
    /// Things already referenced by one of the user's condensations are
    /// left out of later regions.
    pub fn run_condensation(&mut self, now: Timestamp) -> Result<()> {
        let params = self.config.condense.clone();
        let users: Vec<UserId> = self.users.iter().cloned().collect();
        for user in users {
            let refs = &self.condensed_refs;
            let regions = detect_regions_excluding(
                &self.graph,
                &self.store,
                self.config.buoyancy(),
                &user,
                now,
                params.theta,
                params.min_size,
                |id| refs.contains(&(user.clone(), id.clone())),
            )?;
            for region in regions {
                let c = condense_region(
                    &self.graph,
                    &self.store,
                    self.config.buoyancy(),
                    &user,
                    &region,
                    params.k,
                    now,
                    &mut self.contexts,
                    &mut self.condensations,
                )?;
                for r in c.references {
                    self.condensed_refs.insert((user.clone(), r));
                }
            }
        }
        Ok(())
    }

    /// Advances the clock and applies one evidence record.
    pub fn ingest(&mut self, e: &Evidence) -> Result<EvidenceOutcome> {
        self.advance_to(e.ts)?;
        self.apply_evidence(e)
    }

    /// Applies one evidence record at its timestamp. Day-boundary work must
    /// already have been run with [`Engine::advance_to`].
    pub fn apply_evidence(&mut self, e: &Evidence) -> Result<EvidenceOutcome> {
        if let Some(now) = self.clock {
            if e.ts < now {
                return Err(Error::ClockRegression { now: e.ts, last_update: now });
            }
        }
        self.clock = Some(e.ts);
        self.stats.events += 1;
        self.users.insert(e.user.clone());
        let known_context = e.context.as_ref().is_none_or(|c| self.graph.contains(c));
        if !self.graph.contains(&e.thing) || !known_context {
            self.stats.skipped_unknown += 1;
            return Ok(EvidenceOutcome::Skipped);
        }
        if let Some(c) = &e.context {
            if self.graph.get(c)?.kind != ThingKind::Context {
                return Err(Error::NotAContext(c.clone()));
            }
            self.contexts.touch_evidence(c, e.ts);
        }
        match e.action {
            ActionKind::ContextSwitch => {
                let overlay = self.contexts.switch_context(
                    &self.graph,
                    &e.user,
                    &e.thing,
                    e.ts,
                    self.config.buoyancy(),
                    &self.config.context,
                )?;
                let suppressed = overlay.suppressed.len();
                self.contexts.touch_evidence(&e.thing, e.ts);
                self.stats.context_switches += 1;
                Ok(EvidenceOutcome::Switched { suppressed })
            }
            ActionKind::Search => {
                let label = self.graph.get(&e.thing)?.label.clone();
                let threshold = self.config.search.threshold;
                let r = self.search(&e.user, &label, threshold, e.context.as_ref(), e.ts);
                let r = match r {
                    Ok(r) => r,
                    Err(Error::EmptyQuery) => return Ok(EvidenceOutcome::Searched { shown: 0, hidden: 0 }),
                    Err(err) => return Err(err),
                };
                self.stats.searches += 1;
                if r.hidden_count > 0 {
                    self.stats.searches_with_hidden += 1;
                    if r.shown.is_empty() {
                        self.stats.searches_all_hidden += 1;
                    }
                }
                self.stats.hidden_results += r.hidden_count as u64;
                Ok(EvidenceOutcome::Searched {
                    shown: r.shown.len(),
                    hidden: r.hidden_count,
                })
            }
            ActionKind::View | ActionKind::Create | ActionKind::Modify | ActionKind::Annotate => {
                self.stimulate(e)
            }
        }
    }

    fn stimulate(&mut self, e: &Evidence) -> Result<EvidenceOutcome> {
        let Some(mut magnitude) = self.config.stimulation.magnitude(e.action) else {
            return Ok(EvidenceOutcome::Skipped);
        };
        if self.graph.get(&e.thing)?.is_file_backed()
            && on_access_restore(&mut self.policy, &self.graph, &e.thing, e.ts, &mut self.audit)?
        {
            self.stats.restores += 1;
        }
        self.contexts.mark_recalled(&e.thing);

        let mut bonus = false;
        if let Some(c) = &e.context {
            let assessment = self.contexts.dwell.record(&e.user, c, e.ts, &self.config.context);
            if assessment.state == crate::context::ReheatState::CasualVisit {
                magnitude *= self.config.context.reheat_damping;
                self.stats.damped_stimulations += 1;
            }
            bonus = assessment.bonus_due;
        }
        let mut touched_total = 0;
        if magnitude > 0.0 {
            let req = StimulationRequest {
                target: e.thing.clone(),
                magnitude: magnitude.min(1.0),
                at: e.ts,
                context: e.context.clone(),
                user: e.user.clone(),
            };
            let touched = apply_stimulation(&mut self.store, &self.graph, &req, self.config.buoyancy())?;
            touched_total += touched.len();
            self.touched.extend(touched);
            self.stats.stimulations += 1;
        }
        if let (true, Some(c)) = (bonus && self.config.context.reheat_bonus > 0.0, &e.context) {
            let req = StimulationRequest {
                target: c.clone(),
                magnitude: self.config.context.reheat_bonus,
                at: e.ts,
                context: Some(c.clone()),
                user: e.user.clone(),
            };
            let touched = apply_stimulation(&mut self.store, &self.graph, &req, self.config.buoyancy())?;
            touched_total += touched.len();
            self.touched.extend(touched);
            self.stats.reheat_bonuses += 1;
        }
        Ok(EvidenceOutcome::Stimulated { touched: touched_total })
    }

    pub fn search(
        &mut self,
        user: &UserId,
        keywords: &str,
        threshold: f64,
        context: Option<&ThingId>,
        now: Timestamp,
    ) -> Result<SearchResult> {
        if !self.index.as_ref().is_some_and(|i| i.is_current(&self.graph)) {
            self.index = Some(SearchIndex::build(&self.graph));
        }
        let index = self.index.as_ref().expect("built above");
        index.query(&self.graph, &self.store, self.config.buoyancy(), user, keywords, threshold, context, now)
    }

    pub fn mb(&self, user: &UserId, thing: &ThingId, context: Option<&ThingId>, now: Timestamp) -> f64 {
        mb_at(&self.store, &self.graph, self.config.buoyancy(), user, thing, context, now)
    }

    pub fn group_mb(&self, users: &[UserId], thing: &ThingId, now: Timestamp) -> Result<f64> {
        group_mb(&self.store, &self.graph, self.config.buoyancy(), users, thing, now)
    }

    pub fn effective_availability(&self, user: &UserId, thing: &ThingId, now: Timestamp) -> f64 {
        self.contexts
            .effective_availability(&self.store, &self.graph, self.config.buoyancy(), user, thing, now)
    }
}
