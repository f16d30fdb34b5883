//! Memory buoyancy: per `(user, thing, context)` relevance values that decay
//! lazily, rise with stimulation and spread along the graph.

mod decay;
mod schedule;
mod spread;
mod store;

pub use decay::{decay_value, DecayProfile, DecayProfiles, MAX_REINFORCEMENT};
pub use schedule::{scheduled_stimulations, tick_scheduled, ScheduleParams};
pub use spread::{default_predicate_weights, spread_activation, SpreadParams};
pub use store::{
    apply_stimulation, global_mb, group_mb, local_mb, mb_at, record_mb, BuoyancyRecord, ContextKey, MbStore,
};

/// Borrowed view of the parameters every MB computation needs.
#[derive(Clone, Copy, Debug)]
pub struct BuoyancyParams<'a> {
    pub decay: &'a DecayProfiles,
    pub spread: &'a SpreadParams,
    pub schedule: &'a ScheduleParams,
}
