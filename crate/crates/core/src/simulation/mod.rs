//! Time-stepped simulation of the whole installation: PV channels, hybrid
//! inverters, the shared battery bus, an optional generator and the loads.

mod engine;
mod presets;
mod profile;
mod scenario;
mod trace;

use thiserror::Error;

pub use engine::{run_scenario, ChannelSample, PackSample, TracePoint};
pub use presets::{preset, PRESET_NAMES};
pub use profile::{default_irradiance, default_load, hour_of_day, irradiance_profile, load_profile, DailyProfile};
pub use scenario::{
    Channel, ChannelSection, Fault, FaultKind, GeneratorSection, IrradianceSection, LoadSection, PackSection, Scenario,
    ScenarioFile, SCHEMA_VERSION,
};
pub use trace::{write_trace_csv, TRACE_CSV_HEADER};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Invalid(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

impl ScenarioError {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioError::Invalid(_) => "ScenarioInvalid",
            ScenarioError::Parse(_) => "ScenarioParse",
            ScenarioError::UnknownPreset(_) => "UnknownPreset",
        }
    }
}
