//! Synthetic graphs and traces, replay, and reports.

pub mod generate;
pub mod replay;
pub mod report;
pub mod trace;

pub use generate::{generate_pimo, GeneratorSpec};
pub use replay::{read_mb_state, replay, replay_files, write_mb_state, ReplayParams, ReplayReport};
pub use report::{emit_report, ReportFormat};
pub use trace::{generate_trace, TraceSpec, Workload};
