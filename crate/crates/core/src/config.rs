//! On-disk run description. JSON and TOML map onto the same tree.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AgentSpec, MissionConfig, Target};
use crate::objective::Objective;
use crate::optimizer::DescentConfig;
use crate::potential::PotentialConfig;
use crate::scheduler::ScheduleOptions;
use crate::sim::{SimOptions, TrajectoryParams};
use crate::stochastic::RandomModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSection {
    pub mission_length: f64,
    pub horizon: f64,
    #[serde(default)]
    pub no_cross: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// Sampling step of the trace CSV. Defaults to a thousandth of the horizon.
    pub output_step: Option<f64>,
    /// Events closer than this fraction of the horizon are flagged as coincident.
    pub tol_event: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection { output_step: None, tol_event: SimOptions::default().tol_event_rel }
    }
}

impl SimulationSection {
    pub fn output_step(&self, horizon: f64) -> f64 {
        self.output_step.unwrap_or(1e-3 * horizon)
    }

    pub fn options(&self) -> SimOptions {
        SimOptions { tol_event_rel: self.tol_event }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mission: MissionSection,
    pub targets: Vec<Target>,
    pub agents: Vec<AgentSpec>,
    /// Switching points and dwell times to simulate, or to start descent from.
    #[serde(default)]
    pub trajectory: Option<TrajectoryParams>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub excitation: PotentialConfig,
    #[serde(default)]
    pub descent: DescentConfig,
    #[serde(default)]
    pub stochastic: RandomModel,
    #[serde(default)]
    pub schedule: ScheduleOptions,
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a `.toml` file as TOML and anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("toml") => Self::from_toml_str(&text),
            _ => Self::from_json_str(&text),
        }
    }

    pub fn mission(&self) -> Result<MissionConfig> {
        MissionConfig::new(
            self.mission.mission_length,
            self.targets.clone(),
            self.agents.clone(),
            self.mission.horizon,
            self.mission.no_cross,
        )
    }

    pub fn objective(&self) -> Result<Objective> {
        Objective::new(self.mission()?, self.excitation.clone(), self.stochastic.clone())
    }

    /// Checks every section against the mission it describes.
    pub fn validate(&self) -> Result<()> {
        let m = self.mission()?;
        if self.excitation.enabled {
            self.excitation.validate()?;
        }
        self.descent.validate()?;
        self.stochastic.validate(&m)?;
        self.schedule.validate()?;
        if let Some(s) = self.simulation.output_step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config("simulation.output_step must be positive".into()));
            }
        }
        if !(self.simulation.tol_event > 0.0 && self.simulation.tol_event < 1.0) {
            return Err(Error::Config("simulation.tol_event must lie in (0, 1)".into()));
        }
        if let Some(t) = &self.trajectory {
            t.validate(&m)?;
        }
        Ok(())
    }

    /// Canonical JSON of the parsed tree. Equal configs give equal bytes
    /// whichever front-end they came from.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const JSON: &str = r#"{
        "mission": {"mission_length": 20, "horizon": 100},
        "targets": [
            {"position": 5, "growth_rate": 1, "decay_rate": 5, "initial_uncertainty": 1},
            {"position": 10, "growth_rate": 1, "decay_rate": 5, "initial_uncertainty": 1},
            {"position": 15, "growth_rate": 1, "decay_rate": 5, "initial_uncertainty": 1}
        ],
        "agents": [{"initial_position": 0, "sensing_range": 2}]
    }"#;

    const TOML: &str = r#"
        [mission]
        mission_length = 20.0
        horizon = 100.0

        [[targets]]
        position = 5.0
        growth_rate = 1.0
        decay_rate = 5.0
        initial_uncertainty = 1.0

        [[targets]]
        position = 10.0
        growth_rate = 1.0
        decay_rate = 5.0
        initial_uncertainty = 1.0

        [[targets]]
        position = 15.0
        growth_rate = 1.0
        decay_rate = 5.0
        initial_uncertainty = 1.0

        [[agents]]
        initial_position = 0.0
        sensing_range = 2.0
    "#;

    #[test]
    fn front_ends_agree() {
        let a = RunConfig::from_json_str(JSON).unwrap();
        let b = RunConfig::from_toml_str(TOML).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.canonical_json(), b.canonical_json());
        assert_eq!(a.mission().unwrap().num_targets(), 3);
        assert_eq!(a.simulation.output_step(100.0), 0.1);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let bad = JSON.replace("\"horizon\": 100", "\"horizon\": 100, \"colour\": 1");
        assert!(matches!(RunConfig::from_json_str(&bad), Err(Error::Parse(_))));
        let bad = JSON.replace("\"decay_rate\": 5", "\"decay_rate\": 0.5");
        assert!(matches!(RunConfig::from_json_str(&bad), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json_str("{"), Err(Error::Parse(_))));
    }
}
