//! Escalating forgetting measures, storage tiers and the audit log.
//!
//! Blocked actions are refusals recorded in the audit log, never errors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::buoyancy::{global_mb, BuoyancyParams, MbStore};
use crate::error::{Error, Result};
use crate::evidence::Device;
use crate::graph::{Graph, Thing, ThingId, UserId};
use crate::time::{days_between, Timestamp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicePolicy {
    pub hide_threshold: f64,
    /// θ_low: local files below this are moved to the cloud.
    pub evict_threshold: f64,
    /// θ_high: cloud files above this are brought back.
    pub prefetch_threshold: f64,
}

impl DevicePolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.hide_threshold)
            && 0.0 <= self.evict_threshold
            && self.evict_threshold < self.prefetch_threshold
            && self.prefetch_threshold <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid device policy {self:?}")))
        }
    }
}

/// Which MB value the policy compares against its thresholds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MbScope {
    #[default]
    Global,
    /// Local MB in the user's current context, or the no-context record when none is active.
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyParams {
    pub desktop: DevicePolicy,
    pub mobile: DevicePolicy,
    pub t_condense_days: f64,
    pub t_archive_days: f64,
    pub t_delete_days: f64,
    pub restore_grace_days: f64,
    pub evaluation_cadence_days: u32,
    pub mb_scope: MbScope,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            desktop: DevicePolicy {
                hide_threshold: 0.1,
                evict_threshold: 0.05,
                prefetch_threshold: 0.6,
            },
            mobile: DevicePolicy {
                hide_threshold: 0.25,
                evict_threshold: 0.1,
                prefetch_threshold: 0.7,
            },
            t_condense_days: 90.0,
            t_archive_days: 365.0,
            t_delete_days: 730.0,
            restore_grace_days: 7.0,
            evaluation_cadence_days: 1,
            mb_scope: MbScope::Global,
        }
    }
}

impl PolicyParams {
    pub fn device(&self, device: Device) -> &DevicePolicy {
        match device {
            Device::Desktop => &self.desktop,
            Device::Mobile => &self.mobile,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.desktop.validate()?;
        self.mobile.validate()?;
        if !(self.mobile.hide_threshold > self.desktop.hide_threshold) {
            return Err(Error::InvalidConfig(
                "mobile hide_threshold must exceed the desktop one".into(),
            ));
        }
        let gates_ok = 0.0 <= self.t_condense_days
            && self.t_condense_days <= self.t_archive_days
            && self.t_delete_days >= 0.0
            && self.restore_grace_days >= 0.0
            && self.evaluation_cadence_days >= 1;
        if !gates_ok {
            return Err(Error::InvalidConfig(format!("invalid policy timings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscalationLevel {
    None,
    Hide,
    Condense,
    MoveCloud,
    Archive,
    Delete,
}

/// Per-thing facts the escalation rule depends on besides MB and dwell.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ThingMeta {
    pub file_backed: bool,
    pub archived_copy: bool,
    /// Days since the thing was last moved to the archive tier.
    pub archive_age_days: Option<f64>,
}

/// Escalation ladder; antitone in `mb` for fixed dwell and metadata.
/// Tier levels apply to file-backed things only.
pub fn escalation_for(
    meta: &ThingMeta,
    mb: f64,
    dwell_below_days: f64,
    policy: &DevicePolicy,
    params: &PolicyParams,
) -> EscalationLevel {
    if !(mb < policy.hide_threshold) {
        return EscalationLevel::None;
    }
    if dwell_below_days < params.t_condense_days {
        return EscalationLevel::Hide;
    }
    if !meta.file_backed {
        return EscalationLevel::Condense;
    }
    if dwell_below_days >= params.t_archive_days {
        let deletable = meta.archived_copy && meta.archive_age_days.is_some_and(|age| age >= params.t_delete_days);
        return if deletable {
            EscalationLevel::Delete
        } else {
            EscalationLevel::Archive
        };
    }
    if mb < policy.evict_threshold {
        EscalationLevel::MoveCloud
    } else {
        EscalationLevel::Condense
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    #[default]
    Local,
    Cloud,
    Archive,
    /// Removed from every working tier; the archive copy remains.
    Deleted,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Local => "local",
            Tier::Cloud => "cloud",
            Tier::Archive => "archive",
            Tier::Deleted => "deleted",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TierState {
    pub tier: Tier,
    pub archived_copy: bool,
    pub archived_at: Option<Timestamp>,
    pub restored_at: Option<Timestamp>,
}

impl TierState {
    fn in_grace(&self, now: Timestamp, params: &PolicyParams) -> bool {
        self.restored_at
            .is_some_and(|t| days_between(t, now) < params.restore_grace_days)
    }
}

/// What an audit entry or proposal does. The escalation measures plus
/// their reversals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyAction {
    Hide,
    Condense,
    MoveCloud,
    Archive,
    Delete,
    Unhide,
    Prefetch,
    Restore,
}

impl PolicyAction {
    pub const ALL: [PolicyAction; 8] = [
        PolicyAction::Hide,
        PolicyAction::Condense,
        PolicyAction::MoveCloud,
        PolicyAction::Archive,
        PolicyAction::Delete,
        PolicyAction::Unhide,
        PolicyAction::Prefetch,
        PolicyAction::Restore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyAction::Hide => "hide",
            PolicyAction::Condense => "condense",
            PolicyAction::MoveCloud => "move_cloud",
            PolicyAction::Archive => "archive",
            PolicyAction::Delete => "delete",
            PolicyAction::Unhide => "unhide",
            PolicyAction::Prefetch => "prefetch",
            PolicyAction::Restore => "restore",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reason {
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl Reason {
    pub fn new(rule: &str, mb: f64, threshold: f64) -> Self {
        Reason {
            rule: rule.to_string(),
            mb: Some(mb),
            threshold: Some(threshold),
        }
    }

    fn note(rule: &str) -> Self {
        Reason {
            rule: rule.to_string(),
            mb: None,
            threshold: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionProposal {
    pub thing: ThingId,
    pub level: PolicyAction,
    pub reason: Reason,
    pub at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditLogEntry {
    pub ts: Timestamp,
    pub thing: ThingId,
    pub level: PolicyAction,
    pub applied: bool,
    pub reason: Reason,
}

/// Append-only decision log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuditLog {
    entries: Vec<AuditLogEntry>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, entry: AuditLogEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[AuditLogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(applied, refused)` counts per action.
    pub fn summary(&self) -> BTreeMap<PolicyAction, (usize, usize)> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            let slot: &mut (usize, usize) = out.entry(e.level).or_default();
            if e.applied {
                slot.0 += 1;
            } else {
                slot.1 += 1;
            }
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Presentation flags and storage tiers of every thing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyState {
    /// File-backed things only.
    pub tiers: BTreeMap<ThingId, TierState>,
    pub hidden: BTreeSet<ThingId>,
    pub condensed: BTreeSet<ThingId>,
}

impl PolicyState {
    /// Every file-backed thing starts in the local tier.
    pub fn from_graph(graph: &Graph) -> Self {
        let tiers = graph
            .things()
            .filter(|t| t.is_file_backed())
            .map(|t| (t.id.clone(), TierState::default()))
            .collect();
        PolicyState {
            tiers,
            ..Default::default()
        }
    }

    pub fn tier(&self, thing: &ThingId) -> Option<Tier> {
        self.tiers.get(thing).map(|s| s.tier)
    }

    pub fn meta(&self, thing: &Thing, now: Timestamp) -> ThingMeta {
        let state = self.tiers.get(&thing.id);
        ThingMeta {
            file_backed: thing.is_file_backed(),
            archived_copy: state.is_some_and(|s| s.archived_copy),
            archive_age_days: state
                .filter(|s| s.tier == Tier::Archive)
                .and_then(|s| s.archived_at)
                .map(|t| days_between(t, now)),
        }
    }

    /// CSV export `thing,tier,archived_copy`, sorted by thing.
    pub fn write_tiers_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(["thing", "tier", "archived_copy"]).map_err(csv_err)?;
        for (id, s) in &self.tiers {
            w.write_record([id.as_str(), s.tier.as_str(), if s.archived_copy { "true" } else { "false" }])
                .map_err(csv_err)?;
        }
        w.flush()
            .map_err(|e| Error::io(Path::new("<tiers>"), e))?;
        Ok(())
    }

    /// Reads a tier CSV written by [`PolicyState::write_tiers_csv`]. Rows
    /// replace the tier of the things they name.
    pub fn read_tiers_csv<R: std::io::Read>(&mut self, input: R) -> Result<()> {
        let mut r = csv::Reader::from_reader(input);
        for (i, rec) in r.records().enumerate() {
            let bad = |reason: String| Error::InvalidArgument(format!("tiers csv row {}: {reason}", i + 2));
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let (Some(id), Some(tier), Some(copy)) = (rec.get(0), rec.get(1), rec.get(2)) else {
                return Err(bad("expected thing,tier,archived_copy".into()));
            };
            let tier = match tier {
                "local" => Tier::Local,
                "cloud" => Tier::Cloud,
                "archive" => Tier::Archive,
                "deleted" => Tier::Deleted,
                other => return Err(bad(format!("unknown tier `{other}`"))),
            };
            let id = ThingId::new(id).map_err(|e| bad(e.to_string()))?;
            let s = self.tiers.entry(id).or_default();
            s.tier = tier;
            s.archived_copy = copy == "true";
        }
        Ok(())
    }
}

/// Applies proposals without asking. Deletes lacking an archive copy and
/// moves that are not legal from the current tier are refused and logged.
pub fn apply_proposals(
    state: &mut PolicyState,
    proposals: &[ActionProposal],
    audit: &mut AuditLog,
    params: &PolicyParams,
) -> Vec<ActionProposal> {
    let mut applied = Vec::new();
    for p in proposals {
        let mut log = |level: PolicyAction, ok: bool, reason: Reason| {
            audit.append(AuditLogEntry {
                ts: p.at,
                thing: p.thing.clone(),
                level,
                applied: ok,
                reason,
            });
        };
        let ok = match p.level {
            PolicyAction::Hide => state.hidden.insert(p.thing.clone()),
            PolicyAction::Unhide => {
                state.condensed.remove(&p.thing);
                state.hidden.remove(&p.thing)
            }
            PolicyAction::Condense => state.condensed.insert(p.thing.clone()),
            PolicyAction::MoveCloud => match state.tiers.get_mut(&p.thing) {
                Some(s) if s.tier == Tier::Local => {
                    s.tier = Tier::Cloud;
                    true
                }
                _ => false,
            },
            PolicyAction::Prefetch => match state.tiers.get_mut(&p.thing) {
                Some(s) if s.tier == Tier::Cloud => {
                    s.tier = Tier::Local;
                    true
                }
                _ => false,
            },
            PolicyAction::Archive => match state.tiers.get_mut(&p.thing) {
                Some(s) if matches!(s.tier, Tier::Local | Tier::Cloud) => {
                    if s.tier == Tier::Local {
                        // tiers move one step at a time, each with its own entry
                        s.tier = Tier::Cloud;
                        log(PolicyAction::MoveCloud, true, Reason::note("archive_via_cloud"));
                    }
                    s.tier = Tier::Archive;
                    s.archived_copy = true;
                    s.archived_at = Some(p.at);
                    true
                }
                _ => false,
            },
            PolicyAction::Delete => match state.tiers.get_mut(&p.thing) {
                Some(s) if s.tier == Tier::Archive && s.archived_copy => {
                    let age = s.archived_at.map_or(0.0, |t| days_between(t, p.at));
                    if age >= params.t_delete_days {
                        s.tier = Tier::Deleted;
                        true
                    } else {
                        false
                    }
                }
                _ => false,
            },
            PolicyAction::Restore => match state.tiers.get_mut(&p.thing) {
                Some(s) if s.tier != Tier::Local => {
                    s.tier = Tier::Local;
                    s.restored_at = Some(p.at);
                    true
                }
                _ => false,
            },
        };
        let reason = if ok || p.level != PolicyAction::Delete {
            p.reason.clone()
        } else {
            Reason {
                rule: format!("{}:refused_no_archive_copy", p.reason.rule),
                ..p.reason.clone()
            }
        };
        log(p.level, ok, reason);
        if ok {
            applied.push(p.clone());
        }
    }
    applied
}

/// Brings a cloud, archived or deleted file back to local on access.
/// Returns whether a restore happened.
pub fn on_access_restore(
    state: &mut PolicyState,
    graph: &Graph,
    thing: &ThingId,
    now: Timestamp,
    audit: &mut AuditLog,
) -> Result<bool> {
    graph.get(thing)?;
    let Some(s) = state.tiers.get_mut(thing) else {
        return Ok(false);
    };
    if s.tier == Tier::Local {
        return Ok(false);
    }
    let from = s.tier;
    s.tier = Tier::Local;
    s.restored_at = Some(now);
    audit.append(AuditLogEntry {
        ts: now,
        thing: thing.clone(),
        level: PolicyAction::Restore,
        applied: true,
        reason: Reason::note(&format!("access_from_{from}")),
    });
    Ok(true)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SyncPlan {
    /// Ascending MB.
    pub evict: Vec<(ThingId, f64)>,
    /// Descending MB.
    pub prefetch: Vec<(ThingId, f64)>,
}

/// Evict local files below θ_low (unless recently restored); prefetch
/// cloud files above θ_high. Things inaccessible to `user` are ignored.
#[allow(clippy::too_many_arguments)]
pub fn plan_adaptive_sync(
    graph: &Graph,
    store: &MbStore,
    state: &PolicyState,
    user: &UserId,
    device: Device,
    bparams: BuoyancyParams<'_>,
    params: &PolicyParams,
    now: Timestamp,
) -> SyncPlan {
    plan_sync_with(graph, store, state, device, bparams, params, now, |t| {
        t.accessible_to(user).then_some(user)
    })
}

/// One plan over every file, each judged by its owner's global MB.
pub fn plan_owner_sync(
    graph: &Graph,
    store: &MbStore,
    state: &PolicyState,
    device: Device,
    bparams: BuoyancyParams<'_>,
    params: &PolicyParams,
    now: Timestamp,
) -> SyncPlan {
    plan_sync_with(graph, store, state, device, bparams, params, now, |t| Some(&t.owner))
}

#[allow(clippy::too_many_arguments)]
fn plan_sync_with<'g>(
    graph: &'g Graph,
    store: &MbStore,
    state: &PolicyState,
    device: Device,
    bparams: BuoyancyParams<'_>,
    params: &PolicyParams,
    now: Timestamp,
    judge: impl Fn(&'g Thing) -> Option<&'g UserId>,
) -> SyncPlan {
    let policy = params.device(device);
    let mut plan = SyncPlan::default();
    for (id, s) in &state.tiers {
        let Some(thing) = graph.thing(id) else { continue };
        let Some(user) = judge(thing) else { continue };
        let mb = global_mb(store, graph, bparams, user, id, now);
        match s.tier {
            Tier::Local if mb < policy.evict_threshold && !s.in_grace(now, params) => {
                plan.evict.push((id.clone(), mb));
            }
            Tier::Cloud if mb > policy.prefetch_threshold => plan.prefetch.push((id.clone(), mb)),
            _ => {}
        }
    }
    plan.evict.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    plan.prefetch.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    plan
}

/// Turns a sync plan into proposals.
pub fn sync_proposals(plan: &SyncPlan, policy: &DevicePolicy, now: Timestamp) -> Vec<ActionProposal> {
    let evict = plan.evict.iter().map(|(id, mb)| ActionProposal {
        thing: id.clone(),
        level: PolicyAction::MoveCloud,
        reason: Reason::new("sync_evict", *mb, policy.evict_threshold),
        at: now,
    });
    let prefetch = plan.prefetch.iter().map(|(id, mb)| ActionProposal {
        thing: id.clone(),
        level: PolicyAction::Prefetch,
        reason: Reason::new("sync_prefetch", *mb, policy.prefetch_threshold),
        at: now,
    });
    evict.chain(prefetch).collect()
}

/// Periodic evaluation: tracks how long each thing has been below the hide
/// threshold and proposes only changes relative to the current state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyEvaluator {
    below_since: HashMap<ThingId, Timestamp>,
}

impl PolicyEvaluator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn below_since(&self, thing: &ThingId) -> Option<Timestamp> {
        self.below_since.get(thing).copied()
    }

    /// Proposals for one thing given its current MB.
    pub fn evaluate(
        &mut self,
        thing: &Thing,
        mb: f64,
        state: &PolicyState,
        policy: &DevicePolicy,
        params: &PolicyParams,
        now: Timestamp,
    ) -> Vec<ActionProposal> {
        let id = &thing.id;
        let dwell = if mb < policy.hide_threshold {
            let since = *self.below_since.entry(id.clone()).or_insert(now);
            days_between(since, now)
        } else {
            self.below_since.remove(id);
            0.0
        };
        let meta = state.meta(thing, now);
        let level = escalation_for(&meta, mb, dwell, policy, params);
        let mut out = Vec::new();
        let mut propose = |action: PolicyAction, rule: &str, threshold: f64| {
            out.push(ActionProposal {
                thing: id.clone(),
                level: action,
                reason: Reason::new(rule, mb, threshold),
                at: now,
            });
        };
        let hidden = state.hidden.contains(id);
        if level >= EscalationLevel::Hide && !hidden {
            propose(PolicyAction::Hide, "below_hide_threshold", policy.hide_threshold);
        }
        if level == EscalationLevel::None && hidden {
            propose(PolicyAction::Unhide, "above_hide_threshold", policy.hide_threshold);
        }
        if level >= EscalationLevel::Condense && !state.condensed.contains(id) {
            propose(PolicyAction::Condense, "condense_dwell", params.t_condense_days);
        }
        if let Some(s) = state.tiers.get(id) {
            let grace = s.in_grace(now, params);
            match s.tier {
                Tier::Local if !grace && level == EscalationLevel::MoveCloud => {
                    propose(PolicyAction::MoveCloud, "escalate_move_cloud", policy.evict_threshold);
                }
                Tier::Local | Tier::Cloud if !grace && level >= EscalationLevel::Archive => {
                    propose(PolicyAction::Archive, "archive_dwell", params.t_archive_days);
                }
                Tier::Archive if level == EscalationLevel::Delete => {
                    propose(PolicyAction::Delete, "delete_archive_age", params.t_delete_days);
                }
                _ => {}
            }
        }
        out
    }
}
