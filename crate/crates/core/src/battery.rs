//! Lead-acid and LFP packs, pack reassembly, the hybrid parallel DC bus and
//! cell-health checks.
//!
//! A pack is `series x parallel` identical blocks. For lead-acid a block is a
//! 12 V monobloc, for LFP it is a single 3.2 V cell. Cells inside a pack are
//! assumed balanced.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BatteryError {
    #[error("target {target_v} V is not a positive multiple of the {block_v} V block voltage")]
    UnreachableVoltage { target_v: f64, block_v: f64 },
    #[error("{blocks} blocks cannot be split into strings of {series} in series")]
    NonDivisibleTopology { blocks: u32, series: u32 },
    #[error(
        "terminal voltage difference {delta_v:.2} V exceeds {max_delta_v:.2} V; estimated inrush {current_a:.1} A"
    )]
    InrushRisk { delta_v: f64, current_a: f64, max_delta_v: f64 },
    #[error("pack voltage classes differ ({a} V vs {b} V)")]
    VoltageClassMismatch { a: f64, b: f64 },
    #[error("invalid block spec: {0}")]
    InvalidSpec(String),
    #[error("pack topology needs at least one block in series and in parallel")]
    EmptyPack,
    #[error("duplicate pack name {0:?} on bus")]
    DuplicatePack(String),
}

impl BatteryError {
    pub fn name(&self) -> &'static str {
        match self {
            BatteryError::UnreachableVoltage { .. } => "UnreachableVoltage",
            BatteryError::NonDivisibleTopology { .. } => "NonDivisibleTopology",
            BatteryError::InrushRisk { .. } => "InrushRisk",
            BatteryError::VoltageClassMismatch { .. } => "VoltageClassMismatch",
            BatteryError::InvalidSpec(_) => "InvalidSpec",
            BatteryError::EmptyPack => "EmptyPack",
            BatteryError::DuplicatePack(_) => "DuplicatePack",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chemistry {
    LeadAcid,
    Lfp,
}

/// Per-block OCV anchors as (soc %, volts).
const LFP_OCV: [(f64, f64); 4] = [(0.0, 3.000), (20.0, 3.200), (90.0, 3.300), (100.0, 3.375)];
const LEAD_ACID_OCV: [(f64, f64); 4] = [(0.0, 11.8), (20.0, 12.0), (90.0, 12.6), (100.0, 12.9)];

impl Chemistry {
    fn ocv_anchors(self) -> &'static [(f64, f64)] {
        match self {
            Chemistry::Lfp => &LFP_OCV,
            Chemistry::LeadAcid => &LEAD_ACID_OCV,
        }
    }

    /// Highest block voltage the charger/BMS allows. For LFP this is the
    /// full-charge OCV (16 x 3.375 V = 54.0 V for a 16S pack); for lead-acid
    /// the usual 14.4 V absorption setpoint.
    pub fn charge_ceiling_per_block(self) -> f64 {
        match self {
            Chemistry::Lfp => 3.375,
            Chemistry::LeadAcid => 14.4,
        }
    }

    pub fn default_efficiency(self) -> f64 {
        match self {
            Chemistry::Lfp => 0.95,
            Chemistry::LeadAcid => 0.85,
        }
    }
}

impl fmt::Display for Chemistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chemistry::LeadAcid => "lead_acid",
            Chemistry::Lfp => "lfp",
        })
    }
}

/// Electrical data of one block (lead-acid monobloc or LFP cell).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellBlockSpec {
    pub chemistry: Chemistry,
    /// Volts per block.
    pub nominal_voltage: f64,
    /// Ampere-hours per block.
    pub capacity: f64,
    /// Ohms per block.
    pub internal_resistance: f64,
    /// Minimum healthy open-circuit voltage per block.
    pub cutoff_voltage: f64,
}

impl CellBlockSpec {
    pub fn new(
        chemistry: Chemistry,
        nominal_voltage: f64,
        capacity: f64,
        internal_resistance: f64,
        cutoff_voltage: f64,
    ) -> Result<Self, BatteryError> {
        let spec = Self { chemistry, nominal_voltage, capacity, internal_resistance, cutoff_voltage };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BatteryError> {
        let all_positive = [self.nominal_voltage, self.capacity, self.internal_resistance, self.cutoff_voltage]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(BatteryError::InvalidSpec("all block parameters must be positive".into()));
        }
        if self.cutoff_voltage >= self.nominal_voltage {
            return Err(BatteryError::InvalidSpec(format!(
                "cutoff {} V must be below nominal {} V",
                self.cutoff_voltage, self.nominal_voltage
            )));
        }
        Ok(())
    }

    /// 12 V / 100 Ah lead-acid monobloc, 3 mOhm, 10 V cutoff.
    pub fn lead_acid_12v_100ah() -> Self {
        Self {
            chemistry: Chemistry::LeadAcid,
            nominal_voltage: 12.0,
            capacity: 100.0,
            internal_resistance: 0.003,
            cutoff_voltage: 10.0,
        }
    }

    /// 3.2 V / 100 Ah LFP cell. 0.3125 mOhm makes a 16S string 5 mOhm.
    pub fn lfp_cell_100ah() -> Self {
        Self {
            chemistry: Chemistry::Lfp,
            nominal_voltage: 3.2,
            capacity: 100.0,
            internal_resistance: 0.0003125,
            cutoff_voltage: 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryPack {
    pub spec: CellBlockSpec,
    pub series: u32,
    pub parallel: u32,
    /// Usable fraction of nameplate capacity (aging). 1.0 for a new pack.
    #[serde(default = "one")]
    pub capacity_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl BatteryPack {
    pub fn new(spec: CellBlockSpec, series: u32, parallel: u32) -> Result<Self, BatteryError> {
        spec.validate()?;
        if series == 0 || parallel == 0 {
            return Err(BatteryError::EmptyPack);
        }
        Ok(Self { spec, series, parallel, capacity_factor: 1.0 })
    }

    pub fn with_capacity_factor(mut self, factor: f64) -> Self {
        self.capacity_factor = factor;
        self
    }

    pub fn block_count(&self) -> u32 {
        self.series * self.parallel
    }

    pub fn nominal_voltage(&self) -> f64 {
        f64::from(self.series) * self.spec.nominal_voltage
    }

    pub fn capacity_ah(&self) -> f64 {
        f64::from(self.parallel) * self.spec.capacity
    }

    /// Nameplate energy in Wh. Computed per block so that any topology of
    /// the same blocks yields the identical value.
    pub fn energy_nominal(&self) -> f64 {
        f64::from(self.block_count()) * self.spec.nominal_voltage * self.spec.capacity
    }

    /// Energy the state-of-charge counter is referenced to.
    pub fn usable_energy(&self) -> f64 {
        self.energy_nominal() * self.capacity_factor
    }

    pub fn resistance(&self) -> f64 {
        self.spec.internal_resistance * f64::from(self.series) / f64::from(self.parallel)
    }

    pub fn conductance(&self) -> f64 {
        1.0 / self.resistance()
    }

    /// Nominal system voltage class: the string voltage rounded to a
    /// multiple of 12 V (16S LFP at 51.2 V and 4 x 12 V lead-acid are both
    /// 48 V class).
    pub fn voltage_class(&self) -> f64 {
        (self.nominal_voltage() / 12.0).round() * 12.0
    }

    pub fn charge_ceiling(&self) -> f64 {
        f64::from(self.series) * self.spec.chemistry.charge_ceiling_per_block()
    }
}

impl fmt::Display for BatteryPack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} V / {} Ah ({:.1} kWh)",
            trim_float(self.nominal_voltage()),
            trim_float(self.capacity_ah()),
            self.energy_nominal() / 1000.0
        )
    }
}

fn trim_float(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.1}")
    }
}

/// Instantaneous pack state. Current is positive while charging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackState {
    pub soc: f64,
    pub terminal_voltage: f64,
    pub current: f64,
}

impl PackState {
    pub fn at_rest(pack: &BatteryPack, soc: f64) -> Self {
        let soc = soc.clamp(0.0, 100.0);
        Self { soc, terminal_voltage: pack_ocv(pack, soc), current: 0.0 }
    }
}

/// Regroups the blocks of `source` into strings reaching `target_voltage`.
pub fn reassemble_pack(source: &BatteryPack, target_voltage: f64) -> Result<BatteryPack, BatteryError> {
    let block_v = source.spec.nominal_voltage;
    let ratio = target_voltage / block_v;
    let series = ratio.round();
    if !(target_voltage > 0.0) || series < 1.0 || (ratio - series).abs() > 1e-9 * ratio.max(1.0) {
        return Err(BatteryError::UnreachableVoltage { target_v: target_voltage, block_v });
    }
    let series = series as u32;
    let blocks = source.block_count();
    if !blocks.is_multiple_of(series) {
        return Err(BatteryError::NonDivisibleTopology { blocks, series });
    }
    Ok(BatteryPack { series, parallel: blocks / series, ..*source })
}

/// Open-circuit voltage from the piecewise-linear per-block curve.
pub fn pack_ocv(pack: &BatteryPack, soc: f64) -> f64 {
    f64::from(pack.series) * block_ocv(pack.spec.chemistry, soc)
}

fn block_ocv(chemistry: Chemistry, soc: f64) -> f64 {
    let anchors = chemistry.ocv_anchors();
    let soc = soc.clamp(0.0, 100.0);
    for pair in anchors.windows(2) {
        let (s0, v0) = pair[0];
        let (s1, v1) = pair[1];
        if soc <= s1 {
            return v0 + (v1 - v0) * (soc - s0) / (s1 - s0);
        }
    }
    anchors[anchors.len() - 1].1
}

/// Result of one coulomb-counting step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackStep {
    pub state: PackState,
    /// Terminal-side power actually exchanged (W, + = charging). Differs from
    /// the request when the pack saturates at 0 % / 100 % or at `v_cap`.
    pub accepted_power: f64,
}

/// Advances a pack by `dt` seconds at terminal power `power`.
///
/// Stored energy changes by `power * dt * eta` where `eta = efficiency` when
/// charging and `1 / efficiency` when discharging. SoC saturates at 0 and
/// 100; charging is refused outright when the pack is full or the terminal
/// voltage would exceed `v_cap`.
pub fn step_pack(state: &PackState, pack: &BatteryPack, power: f64, dt: f64, efficiency: f64, v_cap: f64) -> PackStep {
    assert!(dt > 0.0, "dt must be positive");
    assert!(efficiency > 0.0 && efficiency <= 1.0, "efficiency {efficiency} outside (0, 1]");
    let rest = |soc: f64| PackStep { state: PackState::at_rest(pack, soc), accepted_power: 0.0 };

    if power == 0.0 || (power > 0.0 && state.soc >= 100.0) {
        return rest(state.soc);
    }
    let energy = pack.usable_energy();
    let eta = direction_efficiency(power, efficiency);
    let raw = state.soc + 100.0 * power * dt * eta / (3600.0 * energy);
    let soc = raw.clamp(0.0, 100.0);
    let accepted = if soc == raw { power } else { (soc - state.soc) * 3600.0 * energy / (100.0 * dt * eta) };

    let ocv = pack_ocv(pack, soc);
    let current = terminal_current(ocv, pack.resistance(), accepted);
    let terminal = ocv + current * pack.resistance();
    if accepted > 0.0 && terminal > v_cap {
        return rest(state.soc);
    }
    PackStep { state: PackState { soc, terminal_voltage: terminal.max(0.0), current }, accepted_power: accepted }
}

fn direction_efficiency(power: f64, efficiency: f64) -> f64 {
    if power > 0.0 {
        efficiency
    } else {
        1.0 / efficiency
    }
}

/// Current `i` solving `power = (ocv + i * r) * i`.
fn terminal_current(ocv: f64, r: f64, power: f64) -> f64 {
    let disc = (ocv * ocv + 4.0 * r * power).max(0.0);
    2.0 * power / (ocv + disc.sqrt())
}

/// Peak current when two sources at different voltages are joined through
/// their combined resistance.
pub fn estimate_inrush(v_a: f64, v_b: f64, r_a: f64, r_b: f64) -> f64 {
    assert!(r_a + r_b > 0.0, "loop resistance must be positive");
    (v_a - v_b).abs() / (r_a + r_b)
}

/// Parallel-connect guard on raw voltages and resistances. Returns the
/// inrush estimate when the voltage difference is within `max_delta_v`.
pub fn check_parallel(v_a: f64, v_b: f64, r_a: f64, r_b: f64, max_delta_v: f64) -> Result<f64, BatteryError> {
    let current_a = estimate_inrush(v_a, v_b, r_a, r_b);
    let delta_v = (v_a - v_b).abs();
    if delta_v > max_delta_v {
        return Err(BatteryError::InrushRisk { delta_v, current_a, max_delta_v });
    }
    Ok(current_a)
}

pub const DEFAULT_MAX_DELTA_V: f64 = 0.5;

/// A named pack sitting on the bus with its live state.
#[derive(Debug, Clone, PartialEq)]
pub struct BusPack {
    pub name: String,
    pub pack: BatteryPack,
    pub state: PackState,
    /// One-way efficiency applied on charge (x) and discharge (/).
    pub efficiency: f64,
}

impl BusPack {
    pub fn new(name: impl Into<String>, pack: BatteryPack, soc: f64) -> Self {
        let efficiency = pack.spec.chemistry.default_efficiency();
        Self { name: name.into(), state: PackState::at_rest(&pack, soc), pack, efficiency }
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Self {
        self.efficiency = efficiency;
        self
    }

    fn charge_limit(&self, dt: f64) -> f64 {
        let room = 100.0 - self.state.soc;
        if room <= 0.0 {
            return 0.0;
        }
        room * 3600.0 * self.pack.usable_energy() / (100.0 * dt * self.efficiency)
    }

    fn discharge_limit(&self, dt: f64, floor: f64) -> f64 {
        let room = self.state.soc - floor;
        if room <= 0.0 {
            return 0.0;
        }
        room * 3600.0 * self.pack.usable_energy() * self.efficiency / (100.0 * dt)
    }
}

/// Packs joined on one DC bus.
///
/// Bus current is shared by pack conductance. Bus voltage is the
/// conductance-weighted mean of the pack terminal voltages, which is the
/// Millman voltage of the parallel connection; the BMS ceiling `v_cap` is
/// enforced on that voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridBus {
    packs: Vec<BusPack>,
    nominal_voltage: f64,
    v_cap: f64,
}

/// Outcome of a bus step before it is committed.
#[derive(Debug, Clone, PartialEq)]
pub struct BusStep {
    pub pack_states: Vec<PackState>,
    pub pack_powers: Vec<f64>,
    pub accepted_power: f64,
    pub voltage: f64,
    pub current: f64,
}

impl HybridBus {
    pub fn single(pack: BusPack) -> Self {
        let nominal_voltage = pack.pack.voltage_class();
        let v_cap = pack.pack.charge_ceiling();
        Self { packs: vec![pack], nominal_voltage, v_cap }
    }

    /// Adds a pack, applying the same class and inrush guard as
    /// [`parallel_connect`] against the present bus voltage.
    pub fn connect(mut self, pack: BusPack, max_delta_v: f64) -> Result<Self, BatteryError> {
        if self.packs.iter().any(|p| p.name == pack.name) {
            return Err(BatteryError::DuplicatePack(pack.name));
        }
        if pack.pack.voltage_class() != self.nominal_voltage {
            return Err(BatteryError::VoltageClassMismatch { a: self.nominal_voltage, b: pack.pack.voltage_class() });
        }
        check_parallel(
            self.voltage(),
            pack.state.terminal_voltage,
            self.resistance(),
            pack.pack.resistance(),
            max_delta_v,
        )?;
        self.v_cap = self.v_cap.min(pack.pack.charge_ceiling());
        self.packs.push(pack);
        Ok(self)
    }

    pub fn with_v_cap(mut self, v_cap: f64) -> Self {
        self.v_cap = v_cap;
        self
    }

    pub fn packs(&self) -> &[BusPack] {
        &self.packs
    }

    pub fn nominal_voltage(&self) -> f64 {
        self.nominal_voltage
    }

    pub fn v_cap(&self) -> f64 {
        self.v_cap
    }

    pub fn is_empty(&self) -> bool {
        self.packs.is_empty()
    }

    /// Sum of nameplate pack energies (Wh).
    pub fn energy_total(&self) -> f64 {
        self.packs.iter().map(|p| p.pack.energy_nominal()).sum()
    }

    pub fn usable_energy(&self) -> f64 {
        self.packs.iter().map(|p| p.pack.usable_energy()).sum()
    }

    /// Energy-weighted state of charge; 0 for a bus without packs.
    pub fn soc(&self) -> f64 {
        let total = self.usable_energy();
        if total <= 0.0 {
            return 0.0;
        }
        let soc = self.packs.iter().map(|p| p.state.soc * p.pack.usable_energy()).sum::<f64>() / total;
        soc.clamp(0.0, 100.0)
    }

    pub fn is_full(&self) -> bool {
        !self.packs.is_empty() && self.packs.iter().all(|p| p.state.soc >= 100.0)
    }

    pub fn voltage(&self) -> f64 {
        weighted_voltage(&self.packs, self.packs.iter().map(|p| p.state.terminal_voltage))
    }

    pub fn current(&self) -> f64 {
        self.packs.iter().map(|p| p.state.current).sum()
    }

    fn resistance(&self) -> f64 {
        1.0 / self.packs.iter().map(|p| p.pack.conductance()).sum::<f64>()
    }

    /// Removes a pack (fault isolation). Returns whether it was present.
    pub fn disconnect(&mut self, name: &str) -> bool {
        let before = self.packs.len();
        self.packs.retain(|p| p.name != name);
        self.packs.len() != before
    }

    /// Largest charge power the packs can absorb in one step of `dt`.
    pub fn charge_headroom(&self, dt: f64) -> f64 {
        self.packs.iter().map(|p| p.charge_limit(dt)).sum()
    }

    /// Largest power the packs can deliver in one step without any pack
    /// dropping below `floor` percent.
    pub fn discharge_headroom(&self, dt: f64, floor: f64) -> f64 {
        self.packs.iter().map(|p| p.discharge_limit(dt, floor)).sum()
    }

    /// Computes the step for bus power `power` (+ = charging) without
    /// committing it. Power beyond the headroom is not accepted.
    pub fn preview(&self, power: f64, dt: f64, floor: f64) -> BusStep {
        let step = self.uncapped(power, dt, floor);
        if power > 0.0 && step.voltage > self.v_cap {
            return self.uncapped(0.0, dt, floor);
        }
        step
    }

    /// Whether charging at `power` would push the bus above `v_cap`.
    pub fn charge_capped(&self, power: f64, dt: f64) -> bool {
        power > 0.0 && self.uncapped(power, dt, 0.0).voltage > self.v_cap
    }

    fn uncapped(&self, power: f64, dt: f64, floor: f64) -> BusStep {
        let weights: Vec<f64> = self.packs.iter().map(|p| p.pack.conductance()).collect();
        let shares = if power > 0.0 {
            let limits: Vec<f64> = self.packs.iter().map(|p| p.charge_limit(dt)).collect();
            water_fill(power, &weights, &limits)
        } else if power < 0.0 {
            let limits: Vec<f64> = self.packs.iter().map(|p| p.discharge_limit(dt, floor)).collect();
            water_fill(-power, &weights, &limits).into_iter().map(|s| -s).collect()
        } else {
            vec![0.0; self.packs.len()]
        };

        let steps: Vec<PackStep> = self
            .packs
            .iter()
            .zip(&shares)
            .map(|(p, &share)| step_pack(&p.state, &p.pack, share, dt, p.efficiency, f64::INFINITY))
            .collect();
        let voltage = weighted_voltage(&self.packs, steps.iter().map(|s| s.state.terminal_voltage));
        BusStep {
            accepted_power: steps.iter().map(|s| s.accepted_power).sum(),
            current: steps.iter().map(|s| s.state.current).sum(),
            pack_states: steps.iter().map(|s| s.state).collect(),
            pack_powers: steps.iter().map(|s| s.accepted_power).collect(),
            voltage,
        }
    }

    pub fn apply(&mut self, step: &BusStep) {
        assert_eq!(step.pack_states.len(), self.packs.len(), "step computed for a different bus");
        for (p, s) in self.packs.iter_mut().zip(&step.pack_states) {
            p.state = *s;
        }
    }

    pub fn step(&mut self, power: f64, dt: f64, floor: f64) -> BusStep {
        let step = self.preview(power, dt, floor);
        self.apply(&step);
        step
    }
}

fn weighted_voltage(packs: &[BusPack], voltages: impl Iterator<Item = f64>) -> f64 {
    let g: f64 = packs.iter().map(|p| p.pack.conductance()).sum();
    if g <= 0.0 {
        return 0.0;
    }
    packs.iter().zip(voltages).map(|(p, v)| p.pack.conductance() * v).sum::<f64>() / g
}

/// Splits non-negative `total` across slots in proportion to `weights`,
/// capping each slot at its limit and redistributing the excess. The caller
/// gets at most the sum of the limits.
fn water_fill(total: f64, weights: &[f64], limits: &[f64]) -> Vec<f64> {
    let mut shares = vec![0.0; weights.len()];
    let mut active: Vec<usize> = (0..weights.len()).filter(|&i| limits[i] > 0.0 && weights[i] > 0.0).collect();
    let capacity: f64 = active.iter().map(|&i| limits[i]).sum();
    let mut remaining = total.min(capacity);
    while !active.is_empty() && remaining > 0.0 {
        let wsum: f64 = active.iter().map(|&i| weights[i]).sum();
        let saturated: Vec<usize> =
            active.iter().copied().filter(|&i| remaining * weights[i] / wsum >= limits[i]).collect();
        if saturated.is_empty() {
            let last = active.len() - 1;
            let mut given = 0.0;
            for &i in &active[..last] {
                shares[i] = remaining * weights[i] / wsum;
                given += shares[i];
            }
            shares[active[last]] = remaining - given;
            break;
        }
        for i in saturated {
            shares[i] = limits[i];
            remaining -= limits[i];
            active.retain(|&a| a != i);
        }
    }
    shares
}

/// Joins two packs of the same voltage class, refusing when their terminal
/// voltages differ by more than `max_delta_v`.
pub fn parallel_connect(a: BusPack, b: BusPack, max_delta_v: f64) -> Result<HybridBus, BatteryError> {
    let (ca, cb) = (a.pack.voltage_class(), b.pack.voltage_class());
    if ca != cb {
        return Err(BatteryError::VoltageClassMismatch { a: ca, b: cb });
    }
    HybridBus::single(a).connect(b, max_delta_v)
}

/// Per-pack share of `total_current` by conductance. Shares add back to the
/// input.
pub fn split_bus_current(bus: &HybridBus, total_current: f64) -> Vec<f64> {
    let g: Vec<f64> = bus.packs().iter().map(|p| p.pack.conductance()).collect();
    let gsum: f64 = g.iter().sum();
    let Some((_, rest)) = g.split_last() else {
        return Vec::new();
    };
    let mut shares: Vec<f64> = rest.iter().map(|gi| total_current * gi / gsum).collect();
    let given: f64 = shares.iter().sum();
    shares.push(total_current - given);
    shares
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellHealth {
    Healthy,
    Failed,
}

impl fmt::Display for CellHealth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellHealth::Healthy => "HEALTHY",
            CellHealth::Failed => "FAILED",
        })
    }
}

/// A block whose resting voltage sits below its discharge cutoff is failed.
pub fn classify_cell_health(spec: &CellBlockSpec, measured_ocv: f64) -> CellHealth {
    if measured_ocv < spec.cutoff_voltage {
        CellHealth::Failed
    } else {
        CellHealth::Healthy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lead_source() -> BatteryPack {
        // 24 V / 600 Ah as 2S6P of 12 V / 100 Ah
        BatteryPack::new(CellBlockSpec::lead_acid_12v_100ah(), 2, 6).unwrap()
    }

    fn lfp16(parallel: u32) -> BatteryPack {
        BatteryPack::new(CellBlockSpec::lfp_cell_100ah(), 16, parallel).unwrap()
    }

    #[test]
    fn reassembly_to_48v() {
        let out = reassemble_pack(&lead_source(), 48.0).unwrap();
        assert_eq!((out.series, out.parallel), (4, 3));
        assert_eq!(out.nominal_voltage(), 48.0);
        assert_eq!(out.capacity_ah(), 300.0);
        assert_eq!(out.energy_nominal(), 14_400.0);
        assert_eq!(out.to_string(), "48 V / 300 Ah (14.4 kWh)");
    }

    #[test]
    fn reassembly_identity_and_errors() {
        let p = BatteryPack::new(CellBlockSpec::lead_acid_12v_100ah(), 4, 1).unwrap();
        assert_eq!(reassemble_pack(&p, 48.0).unwrap(), p);
        assert_eq!(
            reassemble_pack(&lead_source(), 60.0),
            Err(BatteryError::NonDivisibleTopology { blocks: 12, series: 5 })
        );
        assert!(matches!(reassemble_pack(&lead_source(), 50.0), Err(BatteryError::UnreachableVoltage { .. })));
        assert!(matches!(reassemble_pack(&lead_source(), 0.0), Err(BatteryError::UnreachableVoltage { .. })));
    }

    #[test]
    fn ocv_anchor_values() {
        assert!((pack_ocv(&lfp16(1), 100.0) - 54.0).abs() < 1e-12);
        assert!((pack_ocv(&lfp16(1), 20.0) - 51.2).abs() < 1e-12);
        let lead48 = BatteryPack::new(CellBlockSpec::lead_acid_12v_100ah(), 4, 1).unwrap();
        assert!((pack_ocv(&lead48, 90.0) - 50.4).abs() < 1e-12);
        assert!((pack_ocv(&lead48, 0.0) - 47.2).abs() < 1e-12);
    }

    #[test]
    fn discharge_620w_for_an_hour() {
        // 25 000 Wh pack at 80 % loses 620 / 25 000 = 2.48 points.
        let spec = CellBlockSpec { capacity: 25_000.0 / 51.2 / 2.0, ..CellBlockSpec::lfp_cell_100ah() };
        let pack = BatteryPack::new(spec, 16, 2).unwrap();
        assert!((pack.energy_nominal() - 25_000.0).abs() < 1e-9);
        let s0 = PackState::at_rest(&pack, 80.0);
        let out = step_pack(&s0, &pack, -620.0, 3600.0, 1.0, 54.0);
        assert!((out.state.soc - 77.52).abs() < 1e-9);
        assert_eq!(out.accepted_power, -620.0);
        assert!(out.state.current < 0.0);
    }

    #[test]
    fn full_pack_refuses_charge() {
        let pack = lfp16(2);
        let s0 = PackState::at_rest(&pack, 100.0);
        let out = step_pack(&s0, &pack, 2000.0, 60.0, 0.95, 54.0);
        assert_eq!(out.state.soc, 100.0);
        assert_eq!(out.accepted_power, 0.0);
        assert_eq!(out.state.current, 0.0);
    }

    #[test]
    fn zero_power_is_identity() {
        let pack = lfp16(2);
        let s0 = PackState::at_rest(&pack, 42.0);
        assert_eq!(step_pack(&s0, &pack, 0.0, 1234.0, 0.9, 54.0).state, s0);
    }

    #[test]
    fn charge_clamps_at_full_with_partial_acceptance() {
        let pack = lfp16(1);
        let s0 = PackState::at_rest(&pack, 99.9);
        let out = step_pack(&s0, &pack, 5000.0, 3600.0, 1.0, f64::INFINITY);
        assert_eq!(out.state.soc, 100.0);
        let stored = (out.state.soc - 99.9) / 100.0 * pack.energy_nominal();
        assert!((out.accepted_power - stored).abs() < 1e-9);
    }

    #[test]
    fn v_cap_forces_zero_charge() {
        let pack = lfp16(1);
        let s0 = PackState::at_rest(&pack, 99.95);
        let out = step_pack(&s0, &pack, 3000.0, 1.0, 1.0, 54.0);
        assert_eq!(out.accepted_power, 0.0);
        assert_eq!(out.state.soc, 99.95);
    }

    #[test]
    fn terminal_power_matches_request() {
        let pack = lfp16(2);
        let s0 = PackState::at_rest(&pack, 50.0);
        let out = step_pack(&s0, &pack, 2400.0, 60.0, 0.95, 60.0);
        let p = out.state.terminal_voltage * out.state.current;
        assert!((p - 2400.0).abs() < 1e-9);
    }

    #[test]
    fn inrush_examples() {
        assert_eq!(estimate_inrush(48.0, 48.0, 0.005, 0.005), 0.0);
        assert!((estimate_inrush(54.0, 48.0, 0.005, 0.005) - 600.0).abs() < 1e-9);
        assert!((estimate_inrush(50.0, 50.4, 0.005, 0.005) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn connect_guards() {
        let lead = BatteryPack::new(CellBlockSpec::lead_acid_12v_100ah(), 4, 3).unwrap();
        let a = BusPack::new("lead_acid", lead, 50.0);
        let same = a.clone();
        let bus = parallel_connect(a.clone(), BusPack { name: "twin".into(), ..same }, 0.5).unwrap();
        assert_eq!(bus.packs().len(), 2);

        let lfp24 = BatteryPack::new(CellBlockSpec::lfp_cell_100ah(), 8, 1).unwrap();
        let b = BusPack::new("lfp", lfp24, 50.0);
        assert!(matches!(parallel_connect(a.clone(), b, 0.5), Err(BatteryError::VoltageClassMismatch { .. })));

        let dup = parallel_connect(a.clone(), a, 0.5);
        assert!(matches!(dup, Err(BatteryError::DuplicatePack(_))));
    }

    #[test]
    fn hybrid_cap_is_lfp_ceiling() {
        let lead = reassemble_pack(&lead_source(), 48.0).unwrap();
        let la = BusPack::new("lead_acid", lead, 90.0);
        let lfp = BusPack::new("lfp", lfp16(2), 0.0);
        let lfp_soc = find_soc_for_voltage(&lfp.pack, la.state.terminal_voltage);
        let lfp = BusPack::new("lfp", lfp16(2), lfp_soc);
        let bus = parallel_connect(la, lfp, 0.5).unwrap();
        assert!((bus.v_cap() - 54.0).abs() < 1e-12);
        assert_eq!(bus.nominal_voltage(), 48.0);
        assert!((bus.energy_total() - (14_400.0 + 10_240.0)).abs() < 1e-9);
    }

    fn find_soc_for_voltage(pack: &BatteryPack, v: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if pack_ocv(pack, mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn split_examples() {
        let p = |r: f64, name: &str| {
            let spec = CellBlockSpec { internal_resistance: r / 16.0, ..CellBlockSpec::lfp_cell_100ah() };
            BusPack::new(name, BatteryPack::new(spec, 16, 1).unwrap(), 50.0)
        };
        let bus = parallel_connect(p(0.005, "a"), p(0.005, "b"), 0.5).unwrap();
        assert_eq!(split_bus_current(&bus, 46.0), vec![23.0, 23.0]);
        let bus = parallel_connect(p(0.010, "a"), p(0.005, "b"), 0.5).unwrap();
        let s = split_bus_current(&bus, 3.0);
        assert!((s[0] - 1.0).abs() < 1e-12 && (s[1] - 2.0).abs() < 1e-12);
        assert_eq!(s.iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn water_fill_redistributes() {
        let s = water_fill(10.0, &[1.0, 1.0], &[2.0, 100.0]);
        assert_eq!(s, vec![2.0, 8.0]);
        let s = water_fill(10.0, &[1.0, 3.0], &[1.0, 2.0]);
        assert_eq!(s, vec![1.0, 2.0]);
        let s = water_fill(10.0, &[1.0, 1.0], &[0.0, 100.0]);
        assert_eq!(s, vec![0.0, 10.0]);
    }

    #[test]
    fn cell_health_examples() {
        let block = CellBlockSpec::lead_acid_12v_100ah();
        assert_eq!(classify_cell_health(&block, 0.7), CellHealth::Failed);
        assert_eq!(classify_cell_health(&block, 5.6), CellHealth::Failed);
        assert_eq!(classify_cell_health(&block, 12.8), CellHealth::Healthy);
        assert_eq!(classify_cell_health(&block, 10.0), CellHealth::Healthy);
    }
}
