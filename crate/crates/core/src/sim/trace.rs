//! Synthetic evidence traces over a generated graph.
//!
//! Days are weekdays only. Every session opens with a `context_switch`
//! whose `thing` and `context` are both the session context, followed by
//! actions on that context's members.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{ActionKind, Device, Evidence};
use crate::graph::{Direction, Graph, PredicateKind, Thing, ThingId, ThingKind, UserId};
use crate::time::{day_index, Timestamp, DAY_MS, HOUR_MS, MINUTE_MS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Workload {
    /// Two long sessions a day, one context each.
    #[default]
    Focused,
    /// Short bursts with frequent context switches.
    Multitask,
    /// Focused days, with some contexts left dormant for months and re-entered.
    Revisit,
}

impl Workload {
    pub const ALL: [Workload; 3] = [Workload::Focused, Workload::Multitask, Workload::Revisit];

    pub fn as_str(self) -> &'static str {
        match self {
            Workload::Focused => "focused",
            Workload::Multitask => "multitask",
            Workload::Revisit => "revisit",
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Workload {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Workload::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown workload `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceSpec {
    pub seed: u64,
    pub workload: Workload,
    /// First simulated day; defaults to the day of the oldest thing.
    pub start_ts: Option<Timestamp>,
    /// Number of calendar days; defaults to the graph's creation span.
    pub days: Option<u32>,
    /// Share of sessions run by the first user.
    pub primary_user_share: f64,
    pub mobile_share: f64,
    /// Probability that a target is drawn from the newest members.
    pub recency_bias: f64,
    /// Share of contexts left dormant in the revisit workload.
    pub dormant_share: f64,
}

impl Default for TraceSpec {
    fn default() -> Self {
        TraceSpec {
            seed: 42,
            workload: Workload::Focused,
            start_ts: None,
            days: None,
            primary_user_share: 0.7,
            mobile_share: 0.15,
            recency_bias: 0.5,
            dormant_share: 0.25,
        }
    }
}

impl TraceSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("primary_user_share", self.primary_user_share),
            ("mobile_share", self.mobile_share),
            ("recency_bias", self.recency_bias),
            ("dormant_share", self.dormant_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidSpec(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.start_ts.is_some_and(|t| t < 0) {
            return Err(Error::InvalidSpec("start_ts must be non-negative".into()));
        }
        Ok(())
    }
}

/// Action mix of ordinary (non-switch) events.
const ACTION_MIX: [(ActionKind, f64); 5] = [
    (ActionKind::View, 0.55),
    (ActionKind::Modify, 0.18),
    (ActionKind::Search, 0.12),
    (ActionKind::Annotate, 0.08),
    (ActionKind::Create, 0.07),
];

/// A dormancy window `[from, until)` in day indices.
#[derive(Clone, Copy, Debug)]
struct Dormancy {
    from: i64,
    until: i64,
}

struct Pools<'g> {
    /// Contexts sorted by creation time.
    contexts: Vec<&'g Thing>,
    /// Members of each context sorted by creation time.
    members: BTreeMap<&'g ThingId, Vec<&'g Thing>>,
    /// Non-context things sorted by creation time.
    fallback: Vec<&'g Thing>,
    users: Vec<UserId>,
}

impl<'g> Pools<'g> {
    fn new(graph: &'g Graph) -> Result<Self> {
        let by_created = |v: &mut Vec<&Thing>| v.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        let mut contexts: Vec<&Thing> = graph.things().filter(|t| t.kind == ThingKind::Context).collect();
        by_created(&mut contexts);
        let mut members = BTreeMap::new();
        for c in &contexts {
            let mut v: Vec<&Thing> = graph
                .neighbors(&c.id, Direction::Incoming, Some(PredicateKind::InContext))?
                .into_iter()
                .filter_map(|(_, id)| graph.thing(&id))
                .filter(|t| t.kind != ThingKind::Context)
                .collect();
            by_created(&mut v);
            members.insert(&c.id, v);
        }
        let mut fallback: Vec<&Thing> = graph.things().filter(|t| t.kind != ThingKind::Context).collect();
        by_created(&mut fallback);
        let users: BTreeSet<UserId> = graph.things().flat_map(|t| t.access_set()).collect();
        Ok(Pools {
            contexts,
            members,
            fallback,
            users: users.into_iter().collect(),
        })
    }

    /// Picks a thing created at or before `ts` that `user` can see, biased
    /// towards recent ones.
    fn pick(pool: &[&'g Thing], user: &UserId, ts: Timestamp, bias: f64, rng: &mut ChaCha8Rng) -> Option<&'g Thing> {
        let n = pool.partition_point(|t| t.created_at <= ts);
        if n == 0 {
            return None;
        }
        for _ in 0..8 {
            let i = if rng.gen::<f64>() < bias {
                n - 1 - rng.gen_range(0..n.min(25))
            } else {
                rng.gen_range(0..n)
            };
            if pool[i].accessible_to(user) {
                return Some(pool[i]);
            }
        }
        pool[..n].iter().rev().find(|t| t.accessible_to(user)).copied()
    }
}

struct Builder<'g, 's> {
    pools: Pools<'g>,
    spec: &'s TraceSpec,
    rng: ChaCha8Rng,
    out: Vec<Evidence>,
}

impl<'g> Builder<'g, '_> {
    fn session_user(&mut self) -> UserId {
        let users = &self.pools.users;
        if users.len() == 1 || self.rng.gen::<f64>() < self.spec.primary_user_share {
            users[0].clone()
        } else {
            users[self.rng.gen_range(1..users.len())].clone()
        }
    }

    fn device(&mut self) -> Device {
        if self.rng.gen::<f64>() < self.spec.mobile_share {
            Device::Mobile
        } else {
            Device::Desktop
        }
    }

    /// Contexts available to `user` at `ts`, skipping dormant ones.
    fn open_contexts(&self, user: &UserId, ts: Timestamp, dormant: &BTreeMap<ThingId, Dormancy>) -> Vec<&'g Thing> {
        let day = day_index(ts);
        self.pools
            .contexts
            .iter()
            .take_while(|c| c.created_at <= ts)
            .filter(|c| c.accessible_to(user))
            .filter(|c| dormant.get(&c.id).is_none_or(|d| day < d.from || day >= d.until))
            .copied()
            .collect()
    }

    fn action(&mut self) -> ActionKind {
        let mut x = self.rng.gen::<f64>();
        for (a, w) in ACTION_MIX {
            if x < w {
                return a;
            }
            x -= w;
        }
        ActionKind::View
    }

    /// A session of `n` actions in `ctx` starting at `ts`; returns the time
    /// after the last action.
    fn session(&mut self, user: &UserId, ctx: Option<&'g Thing>, mut ts: Timestamp, n: usize) -> Timestamp {
        let device = self.device();
        if let Some(c) = ctx {
            self.out.push(Evidence {
                ts,
                user: user.clone(),
                action: ActionKind::ContextSwitch,
                thing: c.id.clone(),
                context: Some(c.id.clone()),
                device,
            });
        }
        for _ in 0..n {
            ts += self.rng.gen_range(MINUTE_MS..=4 * MINUTE_MS);
            let bias = self.spec.recency_bias;
            let target = ctx
                .and_then(|c| Pools::pick(&self.pools.members[&c.id], user, ts, bias, &mut self.rng))
                .or_else(|| Pools::pick(&self.pools.fallback, user, ts, bias, &mut self.rng));
            let Some(target) = target else { break };
            let mut action = self.action();
            if action == ActionKind::Create && ts - target.created_at > DAY_MS {
                action = ActionKind::Modify;
            }
            self.out.push(Evidence {
                ts,
                user: user.clone(),
                action,
                thing: target.id.clone(),
                context: ctx.map(|c| c.id.clone()),
                device,
            });
        }
        ts
    }

    fn pick_context(&mut self, user: &UserId, ts: Timestamp, dormant: &BTreeMap<ThingId, Dormancy>, avoid: Option<&ThingId>) -> Option<&'g Thing> {
        let open = self.open_contexts(user, ts, dormant);
        if open.is_empty() {
            return None;
        }
        let candidates: Vec<&Thing> = open.iter().copied().filter(|c| Some(&c.id) != avoid).collect();
        let pool = if candidates.is_empty() { open } else { candidates };
        // favour the newer half so active projects dominate
        let i = if self.rng.gen::<f64>() < 0.6 {
            pool.len() - 1 - self.rng.gen_range(0..pool.len().div_ceil(2))
        } else {
            self.rng.gen_range(0..pool.len())
        };
        Some(pool[i])
    }

    fn focused_day(&mut self, day_ts: Timestamp, dormant: &BTreeMap<ThingId, Dormancy>) {
        let mut prev = None;
        for hour in [9, 14] {
            let user = self.session_user();
            let start = day_ts + hour * HOUR_MS + self.rng.gen_range(0..HOUR_MS);
            let ctx = self.pick_context(&user, start, dormant, prev.as_ref());
            let n = self.rng.gen_range(15..=25);
            self.session(&user, ctx, start, n);
            prev = ctx.map(|c| c.id.clone());
        }
    }

    fn multitask_day(&mut self, day_ts: Timestamp) {
        let user = self.session_user();
        let mut ts = day_ts + 8 * HOUR_MS + self.rng.gen_range(0..HOUR_MS);
        let mut prev: Option<ThingId> = None;
        let none = BTreeMap::new();
        for _ in 0..6 {
            let ctx = self.pick_context(&user, ts, &none, prev.as_ref());
            let n = self.rng.gen_range(3..=6);
            ts = self.session(&user, ctx, ts, n);
            ts += self.rng.gen_range(10 * MINUTE_MS..=40 * MINUTE_MS);
            prev = ctx.map(|c| c.id.clone());
        }
    }

    /// A session in `ctx` run by its owner, no earlier than `not_before`.
    fn forced_session(&mut self, ctx: &'g Thing, not_before: Timestamp) -> Timestamp {
        let ts = not_before + self.rng.gen_range(0..HOUR_MS);
        let user = ctx.owner.clone();
        let n = self.rng.gen_range(15..=25);
        self.session(&user, Some(ctx), ts, n)
    }
}

fn is_weekday(day: i64) -> bool {
    // day 0 (1970-01-01) was a Thursday
    !matches!((day + 3).rem_euclid(7), 5 | 6)
}

fn next_weekday(mut day: i64) -> i64 {
    while !is_weekday(day) {
        day += 1;
    }
    day
}

/// Generates a trace over `graph`. Same spec and graph, same trace.
pub fn generate_trace(spec: &TraceSpec, graph: &Graph) -> Result<Vec<Evidence>> {
    spec.validate()?;
    let pools = Pools::new(graph)?;
    let (Some(first), Some(last)) = (
        graph.things().map(|t| t.created_at).min(),
        graph.things().map(|t| t.created_at).max(),
    ) else {
        return Ok(Vec::new());
    };
    let start_day = day_index(spec.start_ts.unwrap_or(first));
    let days = spec.days.map_or(day_index(last) - start_day + 1, i64::from);
    let end_day = start_day + days;

    let mut b = Builder {
        pools,
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7472_6163_6500),
        out: Vec::new(),
    };

    let mut dormant = BTreeMap::new();
    let mut forced: BTreeMap<i64, Vec<&Thing>> = BTreeMap::new();
    if spec.workload == Workload::Revisit {
        let contexts = b.pools.contexts.clone();
        for c in contexts {
            if b.rng.gen::<f64>() >= spec.dormant_share {
                continue;
            }
            let len = b.rng.gen_range(200..=400);
            let earliest = day_index(c.created_at).max(start_day) + 1;
            let latest = end_day - len - 1;
            if latest <= earliest {
                continue;
            }
            let from = next_weekday(b.rng.gen_range(earliest..latest));
            let until = next_weekday(from + len);
            if until >= end_day {
                continue;
            }
            dormant.insert(c.id.clone(), Dormancy { from, until });
            let before = (earliest..from).rev().find(|&d| is_weekday(d));
            if let Some(d) = before {
                forced.entry(d).or_default().push(c);
            }
            forced.entry(until).or_default().push(c);
        }
    }

    for day in start_day..end_day {
        if !is_weekday(day) {
            continue;
        }
        let day_ts = day * DAY_MS;
        match spec.workload {
            Workload::Focused | Workload::Revisit => b.focused_day(day_ts, &dormant),
            Workload::Multitask => b.multitask_day(day_ts),
        }
        if let Some(list) = forced.get(&day) {
            let mut ts = day_ts + 17 * HOUR_MS;
            for c in list.clone() {
                ts = b.forced_session(c, ts) + 5 * MINUTE_MS;
            }
        }
    }
    Ok(b.out)
}
