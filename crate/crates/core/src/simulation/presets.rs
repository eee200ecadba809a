//! Built-in scenarios.

use super::scenario::{Fault, FaultKind, Scenario, ScenarioFile};
use super::ScenarioError;

const PRE_2021: &str = include_str!("../../presets/pre-2021.toml");
const DEFAULT_2021: &str = include_str!("../../presets/2021-default.toml");
const FUTURE_PLAN: &str = include_str!("../../presets/future-plan.toml");

pub const PRESET_NAMES: [&str; 4] = ["pre-2021", "2021-default", "2021-outage", "future-plan"];

/// Loads a built-in scenario by name.
///
/// `2021-outage` is `2021-default` with channel 2's inverter dead and the
/// lead-acid pack isolated from the first step.
pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
    let file = match name {
        "pre-2021" => ScenarioFile::from_toml(PRE_2021)?,
        "2021-default" => ScenarioFile::from_toml(DEFAULT_2021)?,
        "future-plan" => ScenarioFile::from_toml(FUTURE_PLAN)?,
        "2021-outage" => {
            let mut file = ScenarioFile::from_toml(DEFAULT_2021)?;
            file.name = name.to_string();
            file.faults = vec![
                Fault { at: file.start_time, kind: FaultKind::InverterFailure { channel: 2 } },
                Fault { at: file.start_time, kind: FaultKind::PackFailure { pack: "lead_acid".into() } },
            ];
            file
        }
        other => return Err(ScenarioError::UnknownPreset(other.to_string())),
    };
    Scenario::from_file(file)
}
