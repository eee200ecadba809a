//! Energy-node registry: which meter sits on which line and what it measures.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::frame::{MAX_NODE_ID, MIN_NODE_ID};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("cannot parse registry: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("unknown registry preset {0:?}")]
    UnknownPreset(String),
}

impl RegistryError {
    pub fn name(&self) -> &'static str {
        match self {
            RegistryError::Parse(_) => "RegistryParse",
            RegistryError::Invalid(_) => "RegistryInvalid",
            RegistryError::UnknownPreset(_) => "UnknownPreset",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    DcMeter,
    AcMeter,
    Ess,
    Inverter,
}

/// The simulated quantity a meter reports. Channels are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeterSource {
    /// Harvested PV power of a channel (excludes curtailment).
    PvChannel { channel: usize },
    /// Generator output summed over channels.
    Generator,
    /// Load served, summed over channels.
    ServedLoad,
    /// AC output of one channel's inverter.
    InverterOutput { channel: usize },
    /// Battery bus at its own voltage; power and current signed.
    Bus,
    /// One pack on the bus at its own voltage; power and current signed.
    Pack { pack: String },
}

/// Function of a line in the energy statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineClass {
    Pv,
    Generator,
    Consumption,
    /// Monitored but not part of generation/consumption totals.
    Internal,
}

/// Input lines (generation side) of the monitoring plan.
pub const PV_LINES: [&str; 6] = ["PV1", "PV2", "PV3", "PV4", "PV5", "PV6"];
pub const GENERATOR_LINE: &str = "Generator";
/// Output lines (consumption side) of the monitoring plan.
pub const CONSUMPTION_LINES: [&str; 4] = ["LineGeneral", "Line220VAC", "Line48VDC", "LineEMS"];

pub fn classify_line(line: &str) -> LineClass {
    if PV_LINES.contains(&line) {
        LineClass::Pv
    } else if line == GENERATOR_LINE {
        LineClass::Generator
    } else if CONSUMPTION_LINES.contains(&line) {
        LineClass::Consumption
    } else {
        LineClass::Internal
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryNode {
    pub node_id: u8,
    pub line: String,
    pub kind: NodeKind,
    /// Reported voltage for line meters; bus and pack meters report the
    /// simulated voltage instead.
    pub nominal_voltage: f64,
    pub source: MeterSource,
    /// Fraction of the source this meter sees.
    #[serde(default = "one")]
    pub scale: f64,
}

impl fmt::Display for RegistryNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {} ({})", self.node_id, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    schema_version: u32,
    #[serde(rename = "node")]
    nodes: Vec<RegistryNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRegistry {
    nodes: Vec<RegistryNode>,
}

const REGISTRY_2021: &str = include_str!("../../presets/registry-2021.toml");
const REGISTRY_FUTURE: &str = include_str!("../../presets/registry-future-plan.toml");

pub const REGISTRY_PRESETS: [&str; 2] = ["2021", "future-plan"];

impl NodeRegistry {
    pub fn new(nodes: Vec<RegistryNode>) -> Result<Self, RegistryError> {
        let invalid = |m: String| Err(RegistryError::Invalid(m));
        if nodes.is_empty() {
            return invalid("registry has no nodes".into());
        }
        let mut seen = BTreeSet::new();
        for n in &nodes {
            if !(MIN_NODE_ID..=MAX_NODE_ID).contains(&n.node_id) {
                return invalid(format!("{n}: node_id outside {MIN_NODE_ID}..={MAX_NODE_ID}"));
            }
            if !seen.insert(n.node_id) {
                return invalid(format!("duplicate node_id {}", n.node_id));
            }
            if !(n.nominal_voltage > 0.0 && n.nominal_voltage.is_finite()) {
                return invalid(format!("{n}: nominal voltage must be positive"));
            }
            if !(n.scale >= 0.0 && n.scale.is_finite()) {
                return invalid(format!("{n}: scale must be non-negative"));
            }
            if n.line.is_empty() {
                return invalid(format!("{n}: empty line name"));
            }
        }
        Ok(Self { nodes })
    }

    pub fn from_toml(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = toml::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        if file.schema_version != 1 {
            return Err(RegistryError::Invalid(format!("unsupported schema_version {}", file.schema_version)));
        }
        Self::new(file.nodes)
    }

    pub fn preset(name: &str) -> Result<Self, RegistryError> {
        match name {
            "2021" => Self::from_toml(REGISTRY_2021),
            "future-plan" => Self::from_toml(REGISTRY_FUTURE),
            other => Err(RegistryError::UnknownPreset(other.to_string())),
        }
    }

    pub fn nodes(&self) -> &[RegistryNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, node_id: u8) -> Option<&RegistryNode> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }
}
