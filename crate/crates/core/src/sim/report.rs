//! Rendering replay outputs as CSV, JSON or text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::condense::Condensation;
use crate::error::{Error, Result};
use crate::sim::replay::{ReplayReport, AUDIT_JSONL, CONDENSATIONS_JSONL, REPORT_JSON, TIERS_CSV, TIMELINE_CSV};
use crate::time::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Text,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            other => Err(Error::InvalidArgument(format!("unknown report format `{other}`"))),
        }
    }
}

pub const SUMMARY_CSV: &str = "report_summary.csv";
pub const TIERS_REPORT_CSV: &str = "report_tiers.csv";
pub const AUDIT_REPORT_CSV: &str = "report_audit.csv";
pub const TIMELINE_REPORT_CSV: &str = "report_timeline.csv";
pub const DIARY_CSV: &str = "report_diary.csv";
pub const FULL_JSON: &str = "report_full.json";
pub const TEXT_REPORT: &str = "report.txt";

/// Aggregate of one MB timeline sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimelinePoint {
    pub ts: Timestamp,
    pub rows: usize,
    pub mean_mb: f64,
    pub max_mb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiaryEntry {
    pub id: String,
    pub period_start: Timestamp,
    pub period_end: Timestamp,
    pub representatives: Vec<String>,
    pub references: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FullReport {
    pub summary: ReplayReport,
    pub tier_states: BTreeMap<String, usize>,
    pub timeline: Vec<TimelinePoint>,
    pub diary: Vec<DiaryEntry>,
}

fn open(dir: &Path, name: &str) -> Result<(PathBuf, File)> {
    let path = dir.join(name);
    match File::open(&path) {
        Ok(f) => Ok((path, f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingReplayOutput(path)),
        Err(e) => Err(Error::io(&path, e)),
    }
}

fn malformed(path: &Path, reason: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("malformed replay output {}: {reason}", path.display()))
}

fn load(dir: &Path) -> Result<FullReport> {
    let (path, f) = open(dir, REPORT_JSON)?;
    let summary: ReplayReport = serde_json::from_reader(BufReader::new(f)).map_err(|e| malformed(&path, e))?;

    let (path, f) = open(dir, TIERS_CSV)?;
    let mut tier_states = BTreeMap::new();
    for rec in csv::Reader::from_reader(f).records() {
        let rec = rec.map_err(|e| malformed(&path, e))?;
        let tier = rec.get(1).ok_or_else(|| malformed(&path, "missing tier column"))?;
        *tier_states.entry(tier.to_string()).or_default() += 1;
    }

    let (path, f) = open(dir, TIMELINE_CSV)?;
    let mut by_ts: BTreeMap<Timestamp, (usize, f64, f64)> = BTreeMap::new();
    for rec in csv::Reader::from_reader(f).records() {
        let rec = rec.map_err(|e| malformed(&path, e))?;
        let ts: Timestamp = rec.get(0).unwrap_or("").parse().map_err(|e| malformed(&path, e))?;
        let mb: f64 = rec.get(3).unwrap_or("").parse().map_err(|e| malformed(&path, e))?;
        let slot = by_ts.entry(ts).or_insert((0, 0.0, 0.0));
        slot.0 += 1;
        slot.1 += mb;
        slot.2 = slot.2.max(mb);
    }
    let timeline = by_ts
        .into_iter()
        .map(|(ts, (rows, sum, max))| TimelinePoint {
            ts,
            rows,
            mean_mb: sum / rows as f64,
            max_mb: max,
        })
        .collect();

    // present for completeness checks; counts come from the summary
    open(dir, AUDIT_JSONL)?;

    let (path, f) = open(dir, CONDENSATIONS_JSONL)?;
    let mut diary = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let c: Condensation = serde_json::from_str(&line).map_err(|e| malformed(&path, e))?;
        diary.push(DiaryEntry {
            id: c.id,
            period_start: c.period[0],
            period_end: c.period[1],
            representatives: c.representatives.iter().map(|r| r.to_string()).collect(),
            references: c.references.len(),
        });
    }
    diary.sort_by(|a, b| (a.period_end, &a.id).cmp(&(b.period_end, &b.id)));

    Ok(FullReport {
        summary,
        tier_states,
        timeline,
        diary,
    })
}

fn write_csv(dir: &Path, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<PathBuf> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(f);
    let err = |e: csv::Error| malformed(&path, e);
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn summary_rows(r: &ReplayReport) -> Vec<(&'static str, String)> {
    vec![
        ("events", r.events.to_string()),
        ("things_touched", r.things_touched.to_string()),
        ("skipped_unknown", r.skipped_unknown.to_string()),
        ("latency_p50_ms", r.latency.p50_ms.to_string()),
        ("latency_p90_ms", r.latency.p90_ms.to_string()),
        ("latency_p99_ms", r.latency.p99_ms.to_string()),
        ("latency_max_ms", r.latency.max_ms.to_string()),
        ("tick_p99_ms", r.tick_latency.p99_ms.to_string()),
        ("total_ms", r.total_ms.to_string()),
        ("mb_records", r.mb_records.to_string()),
        ("hidden_things", r.hidden_things.to_string()),
        ("condensed_things", r.condensed_things.to_string()),
        ("condensations", r.condensations.to_string()),
        ("audit_entries", r.audit_entries.to_string()),
        ("deletes_without_archive", r.deletes_without_archive.to_string()),
        ("searches", r.search.searches.to_string()),
        ("searches_with_hidden", r.search.with_hidden.to_string()),
        ("searches_all_hidden", r.search.all_hidden.to_string()),
        ("hidden_results", r.search.hidden_results.to_string()),
    ]
}

fn render_text(full: &FullReport) -> String {
    let r = &full.summary;
    let mut s = String::new();
    let _ = writeln!(s, "Replay summary");
    let _ = writeln!(s, "  events            {}", r.events);
    let _ = writeln!(s, "  things touched    {}", r.things_touched);
    let _ = writeln!(s, "  skipped (unknown) {}", r.skipped_unknown);
    let _ = writeln!(
        s,
        "  latency ms        p50 {:.3}  p90 {:.3}  p99 {:.3}  max {:.3}",
        r.latency.p50_ms, r.latency.p90_ms, r.latency.p99_ms, r.latency.max_ms
    );
    let _ = writeln!(s, "  total ms          {:.1}", r.total_ms);
    let _ = writeln!(s, "\nTiers");
    for (tier, n) in &full.tier_states {
        let _ = writeln!(s, "  {tier:<10} {n}");
    }
    let _ = writeln!(s, "\nAudit ({} entries)", r.audit_entries);
    let _ = writeln!(s, "  {:<12} {:>8} {:>8}", "action", "applied", "refused");
    for (action, c) in &r.audit {
        let _ = writeln!(s, "  {action:<12} {:>8} {:>8}", c.applied, c.refused);
    }
    let refused: usize = r.audit.values().map(|c| c.refused).sum();
    let _ = writeln!(s, "  refusals total {refused}");
    let _ = writeln!(s, "  deletes without archive {}", r.deletes_without_archive);
    let _ = writeln!(s, "\nHidden search");
    let _ = writeln!(
        s,
        "  searches {}  with hidden {}  all hidden {}  hidden results {}",
        r.search.searches, r.search.with_hidden, r.search.all_hidden, r.search.hidden_results
    );
    let _ = writeln!(s, "\nMB timeline ({} samples)", full.timeline.len());
    for p in &full.timeline {
        let _ = writeln!(s, "  {}  rows {:>6}  mean {:.4}  max {:.4}", p.ts, p.rows, p.mean_mb, p.max_mb);
    }
    let _ = writeln!(s, "\nDiary ({} condensations)", full.diary.len());
    for d in &full.diary {
        let _ = writeln!(
            s,
            "  {}..{}  {} refs  {}",
            d.period_start,
            d.period_end,
            d.references,
            d.representatives.join(", ")
        );
    }
    s
}

/// Renders the outputs of a replay in `out_dir` and returns the files written.
pub fn emit_report(out_dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    let full = load(out_dir)?;
    match format {
        ReportFormat::Csv => {
            let r = &full.summary;
            let mut files = vec![write_csv(
                out_dir,
                SUMMARY_CSV,
                &["metric", "value"],
                summary_rows(r).into_iter().map(|(k, v)| vec![k.to_string(), v]).collect(),
            )?];
            files.push(write_csv(
                out_dir,
                TIERS_REPORT_CSV,
                &["tier", "count"],
                full.tier_states.iter().map(|(t, n)| vec![t.clone(), n.to_string()]).collect(),
            )?);
            files.push(write_csv(
                out_dir,
                AUDIT_REPORT_CSV,
                &["action", "applied", "refused"],
                r.audit
                    .iter()
                    .map(|(a, c)| vec![a.clone(), c.applied.to_string(), c.refused.to_string()])
                    .collect(),
            )?);
            files.push(write_csv(
                out_dir,
                TIMELINE_REPORT_CSV,
                &["ts", "rows", "mean_mb", "max_mb"],
                full.timeline
                    .iter()
                    .map(|p| vec![p.ts.to_string(), p.rows.to_string(), p.mean_mb.to_string(), p.max_mb.to_string()])
                    .collect(),
            )?);
            files.push(write_csv(
                out_dir,
                DIARY_CSV,
                &["id", "period_start", "period_end", "references", "representatives"],
                full.diary
                    .iter()
                    .map(|d| {
                        vec![
                            d.id.clone(),
                            d.period_start.to_string(),
                            d.period_end.to_string(),
                            d.references.to_string(),
                            d.representatives.join(" "),
                        ]
                    })
                    .collect(),
            )?);
            Ok(files)
        }
        ReportFormat::Json => {
            let path = out_dir.join(FULL_JSON);
            let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::to_writer_pretty(&mut f, &full).map_err(|e| Error::io(&path, e.into()))?;
            f.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
        ReportFormat::Text => {
            let path = out_dir.join(TEXT_REPORT);
            std::fs::write(&path, render_text(&full)).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
    }
}
