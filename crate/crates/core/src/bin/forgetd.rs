use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, NaiveDate};
use clap::{Parser, Subcommand, ValueEnum};

use forgetd::buoyancy::MbStore;
use forgetd::condense::generate_diary;
use forgetd::evidence::{read_trace, validate_trace, write_trace, Device, TraceOrdering};
use forgetd::graph::{load_snapshot, save_snapshot, Graph, ThingId, UserId};
use forgetd::policy::{plan_adaptive_sync, PolicyState};
use forgetd::search::query;
use forgetd::sim::{
    emit_report, generate_pimo, generate_trace, read_mb_state, replay_files, GeneratorSpec, ReportFormat, TraceSpec,
    Workload,
};
use forgetd::time::Timestamp;
use forgetd::{Config, Error, Result};

#[derive(Parser)]
#[command(name = "forgetd", version, about = "Memory buoyancy and managed forgetting over a personal graph")]
struct Cli {
    /// Configuration file (TOML). Falls back to $FORGETD_CONFIG, then defaults.
    #[arg(long, global = true, env = "FORGETD_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph snapshot.
    GenPimo {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 18_000)]
        things: usize,
        #[arg(long, default_value_t = 2_000)]
        private: usize,
        #[arg(long, default_value_t = 1_000)]
        tasks: usize,
        #[arg(long, default_value_t = 7)]
        years: u32,
        #[arg(long, default_value_t = 4)]
        users: usize,
        #[arg(long, default_value_t = 40)]
        contexts: usize,
    },
    /// Generate an evidence trace over a snapshot.
    GenTrace {
        #[arg(long, value_enum, default_value_t = WorkloadArg::Focused)]
        workload: WorkloadArg,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a trace and write MB, audit, tier and timeline files.
    Replay {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reject out-of-order traces instead of sorting them.
        #[arg(long)]
        strict: bool,
    },
    /// Keyword search with MB-based hiding.
    Query {
        #[arg(long)]
        graph: PathBuf,
        /// MB state written by `replay` (mb_state.jsonl).
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        q: String,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        context: Option<String>,
        #[arg(long, default_value = "u1")]
        user: String,
        /// Query time; defaults to the state's clock.
        #[arg(long, value_parser = parse_time)]
        at: Option<Timestamp>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
    },
    /// Monthly diary of what a user touched between two dates.
    Diary {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, value_parser = parse_time)]
        from: Timestamp,
        #[arg(long, value_parser = parse_time)]
        to: Timestamp,
        #[arg(long, default_value = "u1")]
        user: String,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Files a device would evict or prefetch right now.
    SyncPlan {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        state: Option<PathBuf>,
        /// Tier CSV written by `replay`; without it every file is local.
        #[arg(long)]
        tiers: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = DeviceArg::Desktop)]
        device: DeviceArg,
        #[arg(long, default_value = "u1")]
        user: String,
        #[arg(long, value_parser = parse_time)]
        at: Option<Timestamp>,
    },
    /// Render replay outputs as csv, json or text.
    Report {
        /// Directory written by `replay`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum WorkloadArg {
    Focused,
    Multitask,
    Revisit,
}

#[derive(Clone, Copy, ValueEnum)]
enum DeviceArg {
    Desktop,
    Mobile,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Text,
}

/// Epoch milliseconds, `YYYY-MM-DD` (UTC midnight) or RFC 3339.
fn parse_time(s: &str) -> std::result::Result<Timestamp, String> {
    if let Ok(ms) = s.parse::<i64>() {
        return Ok(ms);
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp_millis());
    }
    DateTime::parse_from_rfc3339(s)
        .map(|d| d.timestamp_millis())
        .map_err(|_| format!("expected epoch ms, YYYY-MM-DD or RFC 3339, got `{s}`"))
}

fn load_state(graph: &Graph, state: Option<&Path>) -> Result<(MbStore, Timestamp)> {
    let latest = graph.things().map(|t| t.created_at).max().unwrap_or(0);
    match state {
        Some(p) => {
            let (store, now) = read_mb_state(p)?;
            Ok((store, now.unwrap_or(latest)))
        }
        None => Ok((MbStore::new(), latest)),
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: Cli) -> Result<()> {
    let config = || Config::resolve(cli.config.as_deref());
    match cli.command {
        Command::GenPimo {
            seed,
            out,
            things,
            private,
            tasks,
            years,
            users,
            contexts,
        } => {
            let spec = GeneratorSpec {
                seed,
                n_things: things,
                n_private: private,
                n_tasks: tasks,
                years,
                n_users: users,
                n_contexts: contexts.min(things.saturating_sub(tasks)),
                ..Default::default()
            };
            let graph = generate_pimo(&spec)?;
            save_snapshot(&graph, &out)?;
            eprintln!("wrote {} things, {} edges to {}", graph.thing_count(), graph.edge_count(), out.display());
        }
        Command::GenTrace {
            workload,
            seed,
            graph,
            out,
        } => {
            let graph = load_snapshot(&graph)?;
            let workload = match workload {
                WorkloadArg::Focused => Workload::Focused,
                WorkloadArg::Multitask => Workload::Multitask,
                WorkloadArg::Revisit => Workload::Revisit,
            };
            let spec = TraceSpec {
                seed,
                workload,
                ..Default::default()
            };
            let trace = generate_trace(&spec, &graph)?;
            write_trace(&trace, &out)?;
            eprintln!("wrote {} events to {}", trace.len(), out.display());
        }
        Command::Replay {
            graph,
            trace,
            out,
            strict,
        } => {
            let ordering = if strict { TraceOrdering::Strict } else { TraceOrdering::Lenient };
            let (report, _) = replay_files(&graph, &trace, &config()?, &out, ordering)?;
            eprintln!(
                "replayed {} events, p99 {:.3} ms, total {:.0} ms, outputs in {}",
                report.events,
                report.latency.p99_ms,
                report.total_ms,
                out.display()
            );
        }
        Command::Query {
            graph,
            state,
            q,
            threshold,
            context,
            user,
            at,
            format,
        } => {
            let config = config()?;
            let graph = load_snapshot(&graph)?;
            let (store, now) = load_state(&graph, state.as_deref())?;
            let context = context.map(ThingId::new).transpose()?;
            let threshold = threshold.unwrap_or(config.search.threshold);
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::InvalidArgument(format!("threshold must be in [0, 1], got {threshold}")));
            }
            let result = query(
                &graph,
                &store,
                config.buoyancy(),
                &UserId::new(user),
                &q,
                threshold,
                context.as_ref(),
                at.unwrap_or(now),
            )?;
            match format {
                OutputFormat::Json => print_json(&result),
                OutputFormat::Table => print!("{}", result.render_table()),
            }
        }
        Command::Diary {
            graph,
            trace,
            state,
            from,
            to,
            user,
            k,
        } => {
            let config = config()?;
            let graph = load_snapshot(&graph)?;
            let (store, now) = load_state(&graph, state.as_deref())?;
            let trace = validate_trace(read_trace(&trace)?, TraceOrdering::Lenient)?;
            let diary = generate_diary(
                &graph,
                &store,
                config.buoyancy(),
                &UserId::new(user),
                &trace,
                from,
                to,
                k.unwrap_or(config.condense.k),
                now.max(to),
            )?;
            for c in diary {
                println!("{}", serde_json::to_string(&c).expect("serializable"));
            }
        }
        Command::SyncPlan {
            graph,
            state,
            tiers,
            device,
            user,
            at,
        } => {
            let config = config()?;
            let graph = load_snapshot(&graph)?;
            let (store, now) = load_state(&graph, state.as_deref())?;
            let mut policy = PolicyState::from_graph(&graph);
            if let Some(p) = tiers {
                let f = std::fs::File::open(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                policy.read_tiers_csv(f)?;
            }
            let device = match device {
                DeviceArg::Desktop => Device::Desktop,
                DeviceArg::Mobile => Device::Mobile,
            };
            let plan = plan_adaptive_sync(
                &graph,
                &store,
                &policy,
                &UserId::new(user),
                device,
                config.buoyancy(),
                &config.policy,
                at.unwrap_or(now),
            );
            print_json(&plan);
        }
        Command::Report { out, format } => {
            let format = match format {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Json => ReportFormat::Json,
                FormatArg::Text => ReportFormat::Text,
            };
            for path in emit_report(&out, format)? {
                if matches!(format, ReportFormat::Text) {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                    print!("{text}");
                } else {
                    println!("{}", path.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
