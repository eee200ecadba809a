//! The step loop.

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDateTime};
use serde::Serialize;

use super::scenario::{FaultKind, Scenario};
use super::ScenarioError;
use crate::battery::HybridBus;
use crate::inverter::{dispatch, BatteryPort, DispatchResult};
use crate::pv::array_power;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelSample {
    pub load: f64,
    pub pv_available: f64,
    pub flows: DispatchResult,
    /// The inverter refused the load (overload) or is failed.
    pub tripped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackSample {
    pub name: String,
    pub soc: f64,
    pub voltage: f64,
    pub current: f64,
    /// Terminal power over the step, + = charging.
    pub power: f64,
    pub usable_energy_wh: f64,
    pub efficiency: f64,
}

/// State at `time` and the flows averaged over the step that ends at `time`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub time: NaiveDateTime,
    pub bus_voltage: f64,
    /// + = charging.
    pub bus_current: f64,
    /// + = charging.
    pub bus_power: f64,
    pub soc: f64,
    pub channels: Vec<ChannelSample>,
    pub packs: Vec<PackSample>,
}

impl TracePoint {
    pub fn served_load(&self) -> f64 {
        self.channels.iter().map(|c| c.flows.served()).sum()
    }

    pub fn total_load(&self) -> f64 {
        self.channels.iter().map(|c| c.load).sum()
    }
}

/// The bus as one inverter sees it while earlier channels of the same step
/// have already committed power.
struct SharedBus<'a> {
    bus: &'a HybridBus,
    dt: f64,
    floor: f64,
    charge: f64,
    discharge: f64,
}

impl BatteryPort for SharedBus<'_> {
    fn bus_voltage(&self) -> f64 {
        self.bus.voltage()
    }

    fn charge_acceptance(&self, requested: f64) -> f64 {
        let room = self.bus.charge_headroom(self.dt) - self.charge;
        let q = requested.min(room);
        if q <= 0.0 || self.bus.charge_capped(self.charge - self.discharge + q, self.dt) {
            return 0.0;
        }
        q
    }

    fn discharge_available(&self) -> f64 {
        (self.bus.discharge_headroom(self.dt, self.floor) - self.discharge).max(0.0)
    }
}

#[derive(Default)]
struct FaultState {
    inverter_down: BTreeSet<usize>,
    charger_down: BTreeSet<usize>,
}

/// Runs a scenario and returns one point per step.
pub fn run_scenario(s: &Scenario) -> Result<Vec<TracePoint>, ScenarioError> {
    s.validate()?;
    let dt = s.dt_s as f64;
    let floor = s.discharge_floor_pct;
    let mut bus = s.bus.clone();
    let mut faults = FaultState::default();
    let mut pending: Vec<_> = s.faults.iter().collect();
    pending.sort_by_key(|f| f.at);
    let mut pending = pending.into_iter().peekable();
    let mut trace = Vec::with_capacity(s.steps() as usize);

    for k in 0..s.steps() {
        let t0 = s.start_time + Duration::seconds((k * s.dt_s) as i64);
        while let Some(f) = pending.next_if(|f| f.at <= t0) {
            match &f.kind {
                FaultKind::InverterFailure { channel } => {
                    faults.inverter_down.insert(channel - 1);
                }
                FaultKind::ChargerFailure { channel } => {
                    faults.charger_down.insert(channel - 1);
                }
                FaultKind::PackFailure { pack } => {
                    bus.disconnect(pack);
                }
            }
        }

        let tod = t0.time();
        let irradiance = (s.irradiance_scale * s.irradiance.at(tod)).clamp(0.0, 1.0);
        let total_load = s.load_scale * s.load.at(tod);
        let mut generator_left = if s.generator.available { s.generator.rating_w } else { 0.0 };

        let mut port = SharedBus { bus: &bus, dt, floor, charge: 0.0, discharge: 0.0 };
        let mut samples = Vec::with_capacity(s.channels.len());
        for (i, ch) in s.channels.iter().enumerate() {
            let load = total_load * ch.load_share;
            let inverter_down = faults.inverter_down.contains(&i);
            let pv_available = if inverter_down || faults.charger_down.contains(&i) {
                0.0
            } else {
                array_power(&ch.pv, irradiance, s.pv_derate)
            };
            let (flows, tripped) = if inverter_down {
                let gen = load.min(generator_left);
                (DispatchResult { gen_to_load: gen, unserved: load - gen, ..DispatchResult::default() }, true)
            } else {
                match dispatch(pv_available, load, &port, generator_left, &ch.inverter) {
                    Ok(d) => (d, false),
                    Err(_) => (DispatchResult::tripped(pv_available, load), true),
                }
            };
            port.charge += flows.pv_to_batt;
            port.discharge += flows.batt_to_load;
            generator_left -= flows.gen_to_load;
            samples.push(ChannelSample { load, pv_available, flows, tripped });
        }

        let requested = port.charge - port.discharge;
        let step = bus.step(requested, dt, floor);
        reconcile(&mut samples, step.accepted_power - requested);

        let bus_power = samples.iter().map(|c| c.flows.pv_to_batt - c.flows.batt_to_load).sum();
        let packs = bus
            .packs()
            .iter()
            .zip(&step.pack_powers)
            .map(|(p, &power)| PackSample {
                name: p.name.clone(),
                soc: p.state.soc,
                voltage: p.state.terminal_voltage,
                current: p.state.current,
                power,
                usable_energy_wh: p.pack.usable_energy(),
                efficiency: p.efficiency,
            })
            .collect();
        trace.push(TracePoint {
            time: t0 + Duration::seconds(s.dt_s as i64),
            bus_voltage: step.voltage,
            bus_current: step.current,
            bus_power,
            soc: bus.soc(),
            channels: samples,
            packs,
        });
    }
    Ok(trace)
}

/// Moves a rounding-level mismatch between the committed and the accepted
/// bus power into curtailment (charge side) or unserved load (discharge side).
fn reconcile(samples: &mut [ChannelSample], mut excess: f64) {
    if excess == 0.0 {
        return;
    }
    for c in samples.iter_mut().rev() {
        let f = &mut c.flows;
        if excess < 0.0 && f.pv_to_batt > 0.0 {
            let cut = f.pv_to_batt.min(-excess);
            f.pv_to_batt -= cut;
            f.curtailed += cut;
            excess += cut;
        } else if excess > 0.0 && f.batt_to_load > 0.0 {
            let cut = f.batt_to_load.min(excess);
            f.batt_to_load -= cut;
            f.unserved += cut;
            excess -= cut;
        }
        if excess == 0.0 {
            break;
        }
    }
}
