//! Engine configuration, loaded from TOML. Every section is optional and
//! unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::buoyancy::{BuoyancyParams, DecayProfiles, ScheduleParams, SpreadParams};
use crate::condense::CondenseParams;
use crate::context::ContextParams;
use crate::policy::PolicyParams;
use crate::search::SearchParams;
use crate::sim::ReplayParams;
use crate::error::{Error, Result};
use crate::evidence::StimulationTable;

pub const CONFIG_ENV: &str = "FORGETD_CONFIG";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub decay: DecayProfiles,
    pub spread: SpreadParams,
    pub stimulation: StimulationTable,
    pub schedule: ScheduleParams,
    pub context: ContextParams,
    pub policy: PolicyParams,
    pub condense: CondenseParams,
    pub search: SearchParams,
    pub replay: ReplayParams,
}

impl Config {
    pub fn buoyancy(&self) -> BuoyancyParams<'_> {
        BuoyancyParams {
            decay: &self.decay,
            spread: &self.spread,
            schedule: &self.schedule,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Loads `path` if given, else the file named by `FORGETD_CONFIG`, else defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(p),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.decay.validate()?;
        self.spread.validate()?;
        self.stimulation.validate()?;
        self.schedule.validate()?;
        self.context.validate()?;
        self.policy.validate()?;
        self.condense.validate()?;
        self.search.validate()?;
        self.replay.validate()?;
        Ok(())
    }
}
