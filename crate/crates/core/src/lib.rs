//! Managed forgetting over a personal semantic graph.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod buoyancy;
pub mod condense;
pub mod config;
pub mod context;
pub mod engine;
pub mod error;
pub mod evidence;
pub mod graph;
pub mod policy;
pub mod search;
pub mod sim;
pub mod time;

pub use config::Config;
pub use error::{Error, Result};
