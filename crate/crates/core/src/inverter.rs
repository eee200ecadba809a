//! Hybrid solar inverter: source priority and parallel group rating.
//!
//! Priority is fixed: PV serves the load first, the surplus charges the
//! battery (or is curtailed), and any deficit is drawn from the battery, then
//! the generator. What is left is unserved.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pv::VoltageWindow;

/// Maximum units in one parallel group.
pub const MAX_PARALLEL_UNITS: usize = 9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InverterError {
    #[error("load {load_w:.1} W exceeds inverter rating {rated_w:.1} W")]
    Overload { load_w: f64, rated_w: f64 },
    #[error("parallel group of {0} units exceeds the limit of {MAX_PARALLEL_UNITS}")]
    GroupSizeExceeded(usize),
    #[error("parallel group is empty")]
    EmptyGroup,
}

impl InverterError {
    pub fn name(&self) -> &'static str {
        match self {
            InverterError::Overload { .. } => "OverloadError",
            InverterError::GroupSizeExceeded(_) => "GroupSizeExceeded",
            InverterError::EmptyGroup => "EmptyGroup",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverterSpec {
    pub rated_power_w: f64,
    pub dc_window: VoltageWindow,
    #[serde(default = "default_ac_voltage")]
    pub ac_voltage: f64,
    #[serde(default)]
    pub transfer_time_s: f64,
    /// DC charge current limit of the built-in solar charger.
    #[serde(default = "default_charge_limit")]
    pub charge_current_limit_a: f64,
}

fn default_ac_voltage() -> f64 {
    110.0
}

fn default_charge_limit() -> f64 {
    60.0
}

impl InverterSpec {
    /// 48 V / 6000 W hybrid unit with a 90-230 V (OCV < 250 V) PV input.
    pub fn hybrid_6kw() -> Self {
        Self {
            rated_power_w: 6000.0,
            dc_window: VoltageWindow::new(90.0, 230.0, 250.0).expect("static window"),
            ac_voltage: 110.0,
            transfer_time_s: 0.0,
            charge_current_limit_a: 60.0,
        }
    }
}

/// Power flows of one inverter over one step. All values are watts, >= 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub pv_to_load: f64,
    pub pv_to_batt: f64,
    pub batt_to_load: f64,
    pub gen_to_load: f64,
    pub curtailed: f64,
    pub unserved: f64,
}

impl DispatchResult {
    pub fn load(&self) -> f64 {
        self.served() + self.unserved
    }

    pub fn served(&self) -> f64 {
        self.pv_to_load + self.batt_to_load + self.gen_to_load
    }

    pub fn pv_total(&self) -> f64 {
        self.pv_to_load + self.pv_to_batt + self.curtailed
    }

    /// Everything unavailable: PV wasted, load dropped.
    pub fn tripped(pv_available: f64, load: f64) -> Self {
        Self { curtailed: pv_available, unserved: load, ..Self::default() }
    }
}

/// What the inverter can see of the battery during dispatch.
pub trait BatteryPort {
    fn bus_voltage(&self) -> f64;
    /// Charge power the battery takes for a request (0 when refused).
    fn charge_acceptance(&self, requested: f64) -> f64;
    fn discharge_available(&self) -> f64;
}

/// Fixed charge/discharge limits, independent of the request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryWindow {
    pub voltage: f64,
    pub max_charge: f64,
    pub max_discharge: f64,
}

impl BatteryPort for BatteryWindow {
    fn bus_voltage(&self) -> f64 {
        self.voltage
    }

    fn charge_acceptance(&self, requested: f64) -> f64 {
        requested.min(self.max_charge).max(0.0)
    }

    fn discharge_available(&self) -> f64 {
        self.max_discharge.max(0.0)
    }
}

/// Dispatches one inverter for one step.
///
/// `generator_w` is the generator power available to this inverter (0 when
/// none is connected).
pub fn dispatch(
    pv_available: f64,
    load: f64,
    battery: &dyn BatteryPort,
    generator_w: f64,
    spec: &InverterSpec,
) -> Result<DispatchResult, InverterError> {
    debug_assert!(pv_available >= 0.0 && load >= 0.0);
    if load > spec.rated_power_w {
        return Err(InverterError::Overload { load_w: load, rated_w: spec.rated_power_w });
    }

    let pv_to_load = pv_available.min(load);
    let surplus = pv_available - pv_to_load;
    let charger_cap = spec.charge_current_limit_a * battery.bus_voltage();
    let pv_to_batt = if surplus > 0.0 { battery.charge_acceptance(surplus.min(charger_cap)).min(surplus) } else { 0.0 };
    let curtailed = surplus - pv_to_batt;

    let deficit = load - pv_to_load;
    let batt_to_load = deficit.min(battery.discharge_available());
    let after_batt = deficit - batt_to_load;
    let gen_to_load = after_batt.min(generator_w.max(0.0));
    let unserved = after_batt - gen_to_load;

    Ok(DispatchResult { pv_to_load, pv_to_batt, batt_to_load, gen_to_load, curtailed, unserved })
}

/// Combined AC rating of a parallel group.
pub fn group_rating(units: &[InverterSpec]) -> Result<f64, InverterError> {
    match units.len() {
        0 => Err(InverterError::EmptyGroup),
        n if n > MAX_PARALLEL_UNITS => Err(InverterError::GroupSizeExceeded(n)),
        _ => Ok(units.iter().map(|u| u.rated_power_w).sum()),
    }
}
