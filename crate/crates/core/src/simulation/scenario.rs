//! Scenario file schema and the validated, ready-to-run [`Scenario`].

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::profile::{default_irradiance, default_load, DailyProfile};
use super::ScenarioError;
use crate::battery::{reassemble_pack, BatteryPack, BusPack, CellBlockSpec, HybridBus, DEFAULT_MAX_DELTA_V};
use crate::inverter::{group_rating, InverterSpec};
use crate::pv::{validate_config, PvArrayConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk scenario description (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    pub start_time: NaiveDateTime,
    pub duration_s: u64,
    #[serde(default = "default_dt")]
    pub dt_s: u64,
    #[serde(default = "default_floor")]
    pub discharge_floor_pct: f64,
    #[serde(default = "default_max_delta_v")]
    pub max_delta_v: f64,
    /// Overrides the bus charge ceiling derived from the packs.
    #[serde(default)]
    pub v_cap: Option<f64>,
    #[serde(default)]
    pub irradiance: IrradianceSection,
    #[serde(default)]
    pub load: LoadSection,
    #[serde(default)]
    pub generator: GeneratorSection,
    #[serde(rename = "channel")]
    pub channels: Vec<ChannelSection>,
    #[serde(rename = "pack")]
    pub packs: Vec<PackSection>,
    #[serde(default, rename = "fault")]
    pub faults: Vec<Fault>,
}

fn default_dt() -> u64 {
    60
}

fn default_floor() -> f64 {
    10.0
}

fn default_max_delta_v() -> f64 {
    DEFAULT_MAX_DELTA_V
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrradianceSection {
    /// Normalised profile; the built-in clear-day curve when absent.
    #[serde(default)]
    pub table: Option<DailyProfile>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "one")]
    pub derate: f64,
}

impl Default for IrradianceSection {
    fn default() -> Self {
        Self { table: None, scale: 1.0, derate: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    /// Total demand in watts; the built-in cabin curve when absent.
    #[serde(default)]
    pub table: Option<DailyProfile>,
    #[serde(default = "one")]
    pub scale: f64,
}

impl Default for LoadSection {
    fn default() -> Self {
        Self { table: None, scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    #[serde(default)]
    pub available: bool,
    #[serde(default = "default_generator_rating")]
    pub rating_w: f64,
}

fn default_generator_rating() -> f64 {
    5000.0
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self { available: false, rating_w: default_generator_rating() }
    }
}

/// One PV array feeding one inverter that serves its own AC load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub name: String,
    /// Fraction of the total load profile served by this channel.
    pub load_share: f64,
    pub pv: PvArrayConfig,
    pub inverter: InverterSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackSection {
    pub name: String,
    pub block: CellBlockSpec,
    pub series: u32,
    pub parallel: u32,
    /// Regroup the blocks into strings of this voltage before use.
    #[serde(default)]
    pub reassemble_to_v: Option<f64>,
    pub soc0: f64,
    #[serde(default)]
    pub efficiency: Option<f64>,
    #[serde(default = "one")]
    pub capacity_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// The channel's inverter is dead: no PV, no battery, no inverter output.
    InverterFailure { channel: usize },
    /// The pack is isolated from the bus.
    PackFailure { pack: String },
    /// The channel's solar charger is dead; the inverter still runs.
    ChargerFailure { channel: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub at: NaiveDateTime,
    #[serde(flatten)]
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub load_share: f64,
    pub pv: PvArrayConfig,
    pub inverter: InverterSpec,
}

/// A validated scenario. Fields are public for experiments; [`run_scenario`]
/// re-validates before running.
///
/// [`run_scenario`]: super::run_scenario
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub start_time: NaiveDateTime,
    pub duration_s: u64,
    pub dt_s: u64,
    pub discharge_floor_pct: f64,
    pub irradiance: DailyProfile,
    pub irradiance_scale: f64,
    pub pv_derate: f64,
    pub load: DailyProfile,
    pub load_scale: f64,
    pub generator: GeneratorSection,
    pub channels: Vec<Channel>,
    pub bus: HybridBus,
    pub faults: Vec<Fault>,
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Self::from_file(ScenarioFile::from_toml(text)?)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        if file.packs.is_empty() {
            return Err(invalid("scenario needs at least one pack"));
        }
        let mut packs = file.packs.iter().map(build_pack);
        let first = packs.next().expect("checked non-empty")?;
        let mut bus = HybridBus::single(first);
        for pack in packs {
            let pack = pack?;
            let name = pack.name.clone();
            bus = bus
                .connect(pack, file.max_delta_v)
                .map_err(|e| invalid(format!("pack {name:?}: {}: {e}", e.name())))?;
        }
        if let Some(v_cap) = file.v_cap {
            bus = bus.with_v_cap(v_cap);
        }

        let scenario = Scenario {
            name: file.name,
            start_time: file.start_time,
            duration_s: file.duration_s,
            dt_s: file.dt_s,
            discharge_floor_pct: file.discharge_floor_pct,
            irradiance: file.irradiance.table.unwrap_or_else(default_irradiance),
            irradiance_scale: file.irradiance.scale,
            pv_derate: file.irradiance.derate,
            load: file.load.table.unwrap_or_else(default_load),
            load_scale: file.load.scale,
            generator: file.generator,
            channels: file
                .channels
                .into_iter()
                .map(|c| Channel { name: c.name, load_share: c.load_share, pv: c.pv, inverter: c.inverter })
                .collect(),
            bus,
            faults: file.faults,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.dt_s == 0 {
            return Err(invalid("dt must be positive"));
        }
        if self.duration_s == 0 || !self.duration_s.is_multiple_of(self.dt_s) {
            return Err(invalid(format!(
                "duration {} s must be a positive multiple of dt {} s",
                self.duration_s, self.dt_s
            )));
        }
        if !(0.0..100.0).contains(&self.discharge_floor_pct) {
            return Err(invalid("discharge floor must be in [0, 100)"));
        }
        if !(self.pv_derate > 0.0 && self.pv_derate <= 1.0) {
            return Err(invalid(format!("pv derate {} outside (0, 1]", self.pv_derate)));
        }
        let peak = self.irradiance_scale * self.irradiance.max();
        if !(self.irradiance_scale >= 0.0) || peak > 1.0 {
            return Err(invalid(format!("scaled irradiance peaks at {peak}, outside [0, 1]")));
        }
        if !(self.load_scale >= 0.0 && self.load_scale.is_finite()) {
            return Err(invalid("load scale must be non-negative"));
        }
        if !(self.generator.rating_w >= 0.0) {
            return Err(invalid("generator rating must be non-negative"));
        }
        if self.channels.is_empty() {
            return Err(invalid("scenario needs at least one channel"));
        }
        let inverters: Vec<InverterSpec> = self.channels.iter().map(|c| c.inverter.clone()).collect();
        group_rating(&inverters).map_err(|e| invalid(format!("{}: {e}", e.name())))?;
        for (i, c) in self.channels.iter().enumerate() {
            let label = format!("channel {} ({})", i + 1, c.name);
            if c.pv.series == 0 || c.pv.parallel == 0 {
                return Err(invalid(format!("{label}: empty PV array")));
            }
            if !(c.load_share >= 0.0 && c.load_share.is_finite()) {
                return Err(invalid(format!("{label}: load share must be non-negative")));
            }
            if !(c.inverter.rated_power_w > 0.0) || !(c.inverter.charge_current_limit_a >= 0.0) {
                return Err(invalid(format!("{label}: inverter ratings must be positive")));
            }
            if let Err(violations) = validate_config(&c.pv, &c.inverter.dc_window) {
                let list: Vec<&str> = violations.iter().map(|v| v.as_str()).collect();
                return Err(invalid(format!("{label}: PV {} outside inverter window: {}", c.pv, list.join(", "))));
            }
        }
        if self.bus.is_empty() {
            return Err(invalid("bus has no packs"));
        }
        for p in self.bus.packs() {
            if !(p.efficiency > 0.0 && p.efficiency <= 1.0) {
                return Err(invalid(format!("pack {:?}: efficiency outside (0, 1]", p.name)));
            }
            if !(p.pack.capacity_factor > 0.0 && p.pack.capacity_factor <= 1.0) {
                return Err(invalid(format!("pack {:?}: capacity factor outside (0, 1]", p.name)));
            }
        }
        for f in &self.faults {
            match &f.kind {
                FaultKind::InverterFailure { channel } | FaultKind::ChargerFailure { channel } => {
                    if *channel == 0 || *channel > self.channels.len() {
                        return Err(invalid(format!("fault refers to missing channel {channel}")));
                    }
                }
                FaultKind::PackFailure { pack } => {
                    if !self.bus.packs().iter().any(|p| &p.name == pack) {
                        return Err(invalid(format!("fault refers to missing pack {pack:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn end_time(&self) -> NaiveDateTime {
        self.start_time + Duration::seconds(self.duration_s as i64)
    }

    pub fn steps(&self) -> u64 {
        self.duration_s / self.dt_s
    }
}

fn build_pack(section: &PackSection) -> Result<BusPack, ScenarioError> {
    let label = |e: crate::battery::BatteryError| invalid(format!("pack {:?}: {}: {e}", section.name, e.name()));
    let mut pack = BatteryPack::new(section.block, section.series, section.parallel).map_err(label)?;
    if let Some(target) = section.reassemble_to_v {
        pack = reassemble_pack(&pack, target).map_err(label)?;
    }
    if !(0.0..=100.0).contains(&section.soc0) {
        return Err(invalid(format!("pack {:?}: soc0 {} outside [0, 100]", section.name, section.soc0)));
    }
    let pack = pack.with_capacity_factor(section.capacity_factor);
    let mut bus_pack = BusPack::new(section.name.clone(), pack, section.soc0);
    if let Some(eta) = section.efficiency {
        bus_pack = bus_pack.with_efficiency(eta);
    }
    Ok(bus_pack)
}
