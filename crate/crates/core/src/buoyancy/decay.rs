//! Two-phase decay: an exponential steep phase mixed with a power-law tail.
//!
//! ```text
//! mb(t) = v · [(1 − α)·exp(−λ′·Δt) + α·(1 + Δt/τ)^(−β)],   λ′ = λ / (1 + g·r)
//! ```
//!
//! `Δt` is in days and `r` is the distinct-day stimulation count, capped at
//! [`MAX_REINFORCEMENT`].

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize};

use super::BuoyancyRecord;
use crate::error::{Error, Result};
use crate::graph::ThingKind;
use crate::time::{days_between, Timestamp};

pub const MAX_REINFORCEMENT: u32 = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayProfile {
    /// Steep-phase rate, 1/day.
    pub lambda_steep: f64,
    /// Tail timescale, days.
    pub tau_tail: f64,
    pub beta_tail: f64,
    /// Share of the value carried by the tail.
    pub alpha_mix: f64,
    pub reinforcement_gain: f64,
    /// Floor applied on read to things of this kind that have a record;
    /// never raises a value above what was stored.
    #[serde(default)]
    pub min_mb: f64,
}

impl DecayProfile {
    pub const fn new(lambda_steep: f64, tau_tail: f64, beta_tail: f64, alpha_mix: f64, reinforcement_gain: f64) -> Self {
        DecayProfile {
            lambda_steep,
            tau_tail,
            beta_tail,
            alpha_mix,
            reinforcement_gain,
            min_mb: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_steep >= 0.0
            && self.tau_tail > 0.0
            && self.beta_tail >= 0.0
            && (0.0..=1.0).contains(&self.alpha_mix)
            && self.reinforcement_gain >= 0.0
            && (0.0..=1.0).contains(&self.min_mb);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid decay profile {self:?}")))
        }
    }

    /// Steep rate after reinforcement.
    pub fn effective_lambda(&self, reinforcement: u32) -> f64 {
        let r = reinforcement.min(MAX_REINFORCEMENT) as f64;
        self.lambda_steep / (1.0 + self.reinforcement_gain * r)
    }

    /// Retention factor in `[0, 1]` after `days` of no stimulation.
    pub fn retention(&self, days: f64, reinforcement: u32) -> f64 {
        let days = days.max(0.0);
        let steep = (-self.effective_lambda(reinforcement) * days).exp();
        let tail = (1.0 + days / self.tau_tail).powf(-self.beta_tail);
        (1.0 - self.alpha_mix) * steep + self.alpha_mix * tail
    }

    /// Same profile with the steep rate scaled, used after an event's date.
    pub fn accelerated(&self, factor: f64) -> Self {
        DecayProfile {
            lambda_steep: self.lambda_steep * factor,
            ..*self
        }
    }
}

/// Decays a record's stored value to `now` with the closed form above.
pub fn decay_value(record: &BuoyancyRecord, profile: &DecayProfile, now: Timestamp) -> Result<f64> {
    if now < record.last_update {
        return Err(Error::ClockRegression {
            now,
            last_update: record.last_update,
        });
    }
    let days = days_between(record.last_update, now);
    Ok(record.value * profile.retention(days, record.reinforcement))
}

/// Profile lookup that is total over [`ThingKind`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayProfiles {
    pub default: DecayProfile,
    #[serde(flatten)]
    pub by_kind: BTreeMap<ThingKind, DecayProfile>,
}

impl DecayProfiles {
    pub fn get(&self, kind: ThingKind) -> &DecayProfile {
        self.by_kind.get(&kind).unwrap_or(&self.default)
    }

    pub fn validate(&self) -> Result<()> {
        self.default.validate()?;
        self.by_kind.values().try_for_each(DecayProfile::validate)
    }
}

impl Default for DecayProfiles {
    fn default() -> Self {
        let by_kind = BTreeMap::from([
            (ThingKind::Email, DecayProfile::new(0.6, 14.0, 1.2, 0.2, 0.5)),
            (ThingKind::Presentation, DecayProfile::new(0.15, 90.0, 0.8, 0.5, 0.5)),
            (ThingKind::Event, DecayProfile::new(0.3, 20.0, 1.0, 0.25, 0.5)),
            (ThingKind::Topic, DecayProfile::new(0.1, 120.0, 0.7, 0.5, 0.5)),
            (ThingKind::Person, DecayProfile::new(0.1, 180.0, 0.6, 0.6, 0.5)),
            (ThingKind::Organization, DecayProfile::new(0.1, 180.0, 0.6, 0.6, 0.5)),
            (ThingKind::Context, DecayProfile::new(0.1, 120.0, 0.7, 0.5, 0.5)),
            (ThingKind::Webpage, DecayProfile::new(0.5, 14.0, 1.1, 0.2, 0.5)),
        ]);
        DecayProfiles {
            default: DecayProfile::new(0.3, 30.0, 1.0, 0.3, 0.5),
            by_kind,
        }
    }
}

/// `[decay.<kind>]` tables override the built-in profile of that kind only.
impl<'de> Deserialize<'de> for DecayProfiles {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = BTreeMap::<String, DecayProfile>::deserialize(d)?;
        let mut profiles = DecayProfiles::default();
        for (key, profile) in raw {
            if key == "default" {
                profiles.default = profile;
            } else {
                let kind: ThingKind = key.parse().map_err(D::Error::custom)?;
                profiles.by_kind.insert(kind, profile);
            }
        }
        Ok(profiles)
    }
}
