//! Deterministic replay of an evidence trace and the files it leaves behind.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::buoyancy::{global_mb, record_mb, BuoyancyRecord, ContextKey, MbStore};
use crate::config::Config;
use crate::engine::{Engine, EngineStats};
use crate::error::{Error, Result};
use crate::evidence::{read_trace, validate_trace, Device, Evidence, TraceOrdering};
use crate::graph::{load_snapshot, Graph, ThingId, UserId};
use crate::policy::{AuditLog, PolicyAction, Tier};
use crate::time::{day_index, Timestamp, DAY_MS};

pub const MB_CSV: &str = "mb.csv";
pub const TIMELINE_CSV: &str = "mb_timeline.csv";
pub const AUDIT_JSONL: &str = "audit.jsonl";
pub const TIERS_CSV: &str = "tiers.csv";
pub const CONTEXTS_JSONL: &str = "contexts.jsonl";
pub const CONDENSATIONS_JSONL: &str = "condensations.jsonl";
pub const STATE_JSONL: &str = "mb_state.jsonl";
pub const REPORT_JSON: &str = "report.json";

pub const STATE_FORMAT: &str = "forgetd-mb-state/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayParams {
    /// Device whose thresholds drive hiding and synchronisation.
    pub device: Device,
    /// Days between condensation sweeps; 0 disables them.
    pub condense_every_days: u32,
    /// Days between MB timeline samples; 0 disables sampling.
    pub timeline_every_days: u32,
    /// Global MB below which a thing is left out of a timeline sample.
    pub timeline_min_mb: f64,
}

impl Default for ReplayParams {
    fn default() -> Self {
        ReplayParams {
            device: Device::Desktop,
            condense_every_days: 30,
            timeline_every_days: 30,
            timeline_min_mb: 0.05,
        }
    }
}

impl ReplayParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.timeline_min_mb) {
            return Err(Error::InvalidConfig(format!(
                "replay.timeline_min_mb must be in [0, 1], got {}",
                self.timeline_min_mb
            )));
        }
        Ok(())
    }
}

/// Wall-clock latency summary in milliseconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub samples: usize,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
}

impl LatencySummary {
    /// Nearest-rank percentiles.
    pub fn from_micros(mut samples: Vec<u64>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        let n = samples.len();
        let rank = |p: f64| {
            let i = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
            samples[i] as f64 / 1000.0
        };
        LatencySummary {
            samples: n,
            p50_ms: rank(0.50),
            p90_ms: rank(0.90),
            p99_ms: rank(0.99),
            max_ms: samples[n - 1] as f64 / 1000.0,
            mean_ms: samples.iter().sum::<u64>() as f64 / n as f64 / 1000.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionCounts {
    pub applied: usize,
    pub refused: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub searches: u64,
    pub with_hidden: u64,
    pub all_hidden: u64,
    pub hidden_results: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimelineSummary {
    pub samples: usize,
    pub rows: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub events: usize,
    pub things_touched: usize,
    pub skipped_unknown: u64,
    pub first_ts: Option<Timestamp>,
    pub last_ts: Option<Timestamp>,
    /// Per-event update latency (stimulation, switch or search).
    pub latency: LatencySummary,
    /// Day-boundary work (scheduled stimulation, policy, condensation).
    pub tick_latency: LatencySummary,
    pub total_ms: f64,
    pub mb_records: usize,
    pub timeline: TimelineSummary,
    /// File-backed things per tier at the end of the run.
    pub tiers: BTreeMap<String, usize>,
    pub hidden_things: usize,
    pub condensed_things: usize,
    pub audit: BTreeMap<String, ActionCounts>,
    pub audit_entries: usize,
    /// Applied deletes with no earlier applied archive of the same thing.
    pub deletes_without_archive: usize,
    pub condensations: usize,
    pub search: SearchStats,
    pub stats: EngineStats,
}

impl ReplayReport {
    /// Fills the audit-derived fields from `audit`.
    pub fn summarize_audit(&mut self, audit: &AuditLog) {
        self.audit = PolicyAction::ALL
            .iter()
            .map(|a| (a.as_str().to_string(), ActionCounts::default()))
            .collect();
        for (action, (applied, refused)) in audit.summary() {
            self.audit
                .insert(action.as_str().to_string(), ActionCounts { applied, refused });
        }
        self.audit_entries = audit.len();
        self.deletes_without_archive = deletes_without_archive(audit);
    }
}

/// Applied deletes not preceded by an applied archive of the same thing,
/// recomputed from the log alone.
pub fn deletes_without_archive(audit: &AuditLog) -> usize {
    let mut archived = BTreeSet::new();
    let mut bad = 0;
    for e in audit.entries().iter().filter(|e| e.applied) {
        match e.level {
            PolicyAction::Archive => {
                archived.insert(&e.thing);
            }
            PolicyAction::Delete if !archived.contains(&e.thing) => bad += 1,
            _ => {}
        }
    }
    bad
}

fn out_file(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path, BufWriter::new(f)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidArgument(format!("csv {}: {other:?}", path.display())),
    }
}

struct Timeline {
    writer: Option<(PathBuf, csv::Writer<BufWriter<File>>)>,
    summary: TimelineSummary,
    every: i64,
    min_mb: f64,
}

impl Timeline {
    fn new(dir: Option<&Path>, params: &ReplayParams) -> Result<Self> {
        let writer = match dir {
            Some(d) => {
                let (path, f) = out_file(d, TIMELINE_CSV)?;
                let mut w = csv::Writer::from_writer(f);
                w.write_record(["ts", "user", "thing", "global_mb"]).map_err(csv_err(&path))?;
                Some((path, w))
            }
            None => None,
        };
        Ok(Timeline {
            writer,
            summary: TimelineSummary::default(),
            every: i64::from(params.timeline_every_days),
            min_mb: params.timeline_min_mb,
        })
    }

    fn sample(&mut self, engine: &Engine, day: i64) -> Result<()> {
        if self.every == 0 || day.rem_euclid(self.every) != 0 {
            return Ok(());
        }
        let at = day * DAY_MS;
        let p = engine.config.buoyancy();
        self.summary.samples += 1;
        for user in engine.store.users() {
            let mut ids: Vec<&ThingId> = engine.store.things_of(user).collect();
            ids.sort();
            for id in ids {
                let mb = global_mb(&engine.store, &engine.graph, p, user, id, at);
                if mb < self.min_mb {
                    continue;
                }
                self.summary.rows += 1;
                if let Some((path, w)) = &mut self.writer {
                    w.write_record([at.to_string(), user.to_string(), id.to_string(), mb.to_string()])
                        .map_err(csv_err(path))?;
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<TimelineSummary> {
        if let Some((path, mut w)) = self.writer {
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(self.summary)
    }
}

/// Replays `trace` over `graph`. When `out_dir` is given every output file
/// is written there.
pub fn replay(graph: Graph, trace: &[Evidence], config: &Config, out_dir: Option<&Path>) -> Result<(ReplayReport, Engine)> {
    let started = Instant::now();
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut engine = Engine::new(graph, config.clone())?;
    let mut timeline = Timeline::new(out_dir, &config.replay)?;
    let mut event_us = Vec::with_capacity(trace.len());
    let mut tick_us = Vec::new();
    let mut last_day: Option<i64> = None;

    for (index, e) in trace.iter().enumerate() {
        let at = |err: Error| Error::AtEvent {
            index,
            source: Box::new(err),
        };
        let day = day_index(e.ts);
        if last_day != Some(day) {
            let t = Instant::now();
            engine.advance_to(e.ts).map_err(at)?;
            tick_us.push(t.elapsed().as_micros() as u64);
            // sample every elapsed sampling day at its start
            let from = last_day.map_or(day, |d| d + 1);
            for d in from..=day {
                timeline.sample(&engine, d)?;
            }
            last_day = Some(day);
        }
        let t = Instant::now();
        engine.apply_evidence(e).map_err(at)?;
        event_us.push(t.elapsed().as_micros() as u64);
    }

    let mut report = ReplayReport {
        events: trace.len(),
        things_touched: engine.things_touched(),
        skipped_unknown: engine.stats.skipped_unknown,
        first_ts: trace.first().map(|e| e.ts),
        last_ts: trace.last().map(|e| e.ts),
        latency: LatencySummary::from_micros(event_us),
        tick_latency: LatencySummary::from_micros(tick_us),
        mb_records: engine.store.len(),
        timeline: timeline.finish()?,
        hidden_things: engine.policy.hidden.len(),
        condensed_things: engine.policy.condensed.len(),
        condensations: engine.condensations.len(),
        search: SearchStats {
            searches: engine.stats.searches,
            with_hidden: engine.stats.searches_with_hidden,
            all_hidden: engine.stats.searches_all_hidden,
            hidden_results: engine.stats.hidden_results,
        },
        stats: engine.stats.clone(),
        ..Default::default()
    };
    for tier in [Tier::Local, Tier::Cloud, Tier::Archive, Tier::Deleted] {
        report.tiers.insert(tier.as_str().to_string(), 0);
    }
    for s in engine.policy.tiers.values() {
        *report.tiers.entry(s.tier.as_str().to_string()).or_default() += 1;
    }
    report.summarize_audit(&engine.audit);

    if let Some(dir) = out_dir {
        write_outputs(&engine, dir)?;
        report.total_ms = started.elapsed().as_secs_f64() * 1000.0;
        let (path, mut f) = out_file(dir, REPORT_JSON)?;
        serde_json::to_writer_pretty(&mut f, &report).map_err(|e| Error::io(&path, e.into()))?;
        f.write_all(b"\n").and_then(|_| f.flush()).map_err(|e| Error::io(&path, e))?;
    } else {
        report.total_ms = started.elapsed().as_secs_f64() * 1000.0;
    }
    Ok((report, engine))
}

/// Loads inputs from disk and replays them.
pub fn replay_files(
    snapshot: &Path,
    trace: &Path,
    config: &Config,
    out_dir: &Path,
    ordering: TraceOrdering,
) -> Result<(ReplayReport, Engine)> {
    let graph = load_snapshot(snapshot)?;
    let trace = validate_trace(read_trace(trace)?, ordering)?;
    replay(graph, &trace, config, Some(out_dir))
}

fn write_outputs(engine: &Engine, dir: &Path) -> Result<()> {
    let now = engine.now().unwrap_or(0);
    let p = engine.config.buoyancy();

    let (path, f) = out_file(dir, MB_CSV)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["thing", "user", "context", "mb", "ts"]).map_err(csv_err(&path))?;
    for (user, id, ctx, rec) in engine.store.entries() {
        let Some(thing) = engine.graph.thing(id) else { continue };
        let mb = record_mb(rec, thing, p, now);
        let ctx = ctx.as_ref().map_or("", ThingId::as_str);
        w.write_record([id.as_str(), user.as_str(), ctx, &mb.to_string(), &now.to_string()])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let (path, mut f) = out_file(dir, AUDIT_JSONL)?;
    engine.audit.write_jsonl(&mut f).and_then(|_| f.flush()).map_err(|e| Error::io(&path, e))?;

    let (path, mut f) = out_file(dir, TIERS_CSV)?;
    engine.policy.write_tiers_csv(&mut f)?;
    f.flush().map_err(|e| Error::io(&path, e))?;

    let (path, mut f) = out_file(dir, CONTEXTS_JSONL)?;
    let io = |e: std::io::Error| Error::io(&path, e);
    for c in engine.contexts.contexts() {
        serde_json::to_writer(&mut f, c).map_err(|e| io(e.into()))?;
        f.write_all(b"\n").map_err(io)?;
    }
    f.flush().map_err(io)?;

    let (path, mut f) = out_file(dir, CONDENSATIONS_JSONL)?;
    engine.condensations.write_jsonl(&mut f).and_then(|_| f.flush()).map_err(|e| Error::io(&path, e))?;

    let (path, mut f) = out_file(dir, STATE_JSONL)?;
    write_mb_state(&engine.store, engine.now(), &mut f)
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(&path, e))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct StateHeader {
    format: String,
    now: Option<Timestamp>,
}

#[derive(Serialize, Deserialize)]
struct StateLine {
    user: UserId,
    thing: ThingId,
    context: ContextKey,
    #[serde(flatten)]
    record: BuoyancyRecord,
}

/// Writes the raw MB store: a header line, then one record per line sorted
/// by `(user, thing, context)`.
pub fn write_mb_state<W: Write>(store: &MbStore, now: Option<Timestamp>, mut out: W) -> std::io::Result<()> {
    let header = StateHeader {
        format: STATE_FORMAT.to_string(),
        now,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for (user, thing, ctx, rec) in store.entries() {
        let line = StateLine {
            user: user.clone(),
            thing: thing.clone(),
            context: ctx.clone(),
            record: *rec,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a store written by [`write_mb_state`] together with its clock.
pub fn read_mb_state(path: impl AsRef<Path>) -> Result<(MbStore, Option<Timestamp>)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, reason: String| Error::InvalidArgument(format!("{} line {line}: {reason}", path.display()));
    let mut lines = BufReader::new(f).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(bad(1, "missing header".into())),
    };
    let header: StateHeader = serde_json::from_str(&header).map_err(|e| bad(1, e.to_string()))?;
    if header.format != STATE_FORMAT {
        return Err(bad(1, format!("unsupported format `{}`", header.format)));
    }
    let mut store = MbStore::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: StateLine = serde_json::from_str(&line).map_err(|e| bad(i + 2, e.to_string()))?;
        store.insert(&l.user, &l.thing, l.context, l.record);
    }
    Ok((store, header.now))
}
