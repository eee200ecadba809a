//! Register map and a simulated meter that answers from a simulation trace.

use std::sync::Arc;

use chrono::{Duration, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::registry::{MeterSource, RegistryNode};
use crate::simulation::TracePoint;

pub const REG_VOLTAGE: u16 = 0x0000;
pub const REG_CURRENT: u16 = 0x0002;
pub const REG_POWER: u16 = 0x0004;
pub const REG_ENERGY: u16 = 0x0006;
/// Registers 0x0000..0x000A are mapped.
pub const REGISTER_COUNT: u16 = 10;

/// Class-0.5 accuracy: readings within +-0.5 % of the true value.
pub const CLASS_05_BOUND: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeterError {
    #[error("registers {addr:#06x}+{count} are not mapped")]
    IllegalAddress { addr: u16, count: u16 },
    #[error("{0}")]
    Unmapped(String),
}

impl MeterError {
    pub fn name(&self) -> &'static str {
        match self {
            MeterError::IllegalAddress { .. } => "IllegalAddress",
            MeterError::Unmapped(_) => "UnmappedSource",
        }
    }
}

/// One meter reading in wire units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RegisterBlock {
    pub voltage_mv: u32,
    pub current_ma: i32,
    pub power_mw: i32,
    pub energy_mwh: u64,
}

impl RegisterBlock {
    /// Converts engineering values, rounding to the nearest milli-unit and
    /// saturating at the register range. Energy is truncated so that a
    /// growing counter never reads ahead of itself.
    pub fn from_values(voltage: f64, current: f64, power: f64, energy_wh: f64) -> Self {
        Self {
            voltage_mv: (voltage * 1000.0).round().clamp(0.0, f64::from(u32::MAX)) as u32,
            current_ma: (current * 1000.0).round().clamp(f64::from(i32::MIN), f64::from(i32::MAX)) as i32,
            power_mw: (power * 1000.0).round().clamp(f64::from(i32::MIN), f64::from(i32::MAX)) as i32,
            energy_mwh: (energy_wh * 1000.0).floor().max(0.0) as u64,
        }
    }

    pub fn voltage(&self) -> f64 {
        f64::from(self.voltage_mv) / 1000.0
    }

    pub fn current(&self) -> f64 {
        f64::from(self.current_ma) / 1000.0
    }

    pub fn power(&self) -> f64 {
        f64::from(self.power_mw) / 1000.0
    }

    pub fn energy_wh(&self) -> f64 {
        self.energy_mwh as f64 / 1000.0
    }

    pub fn to_registers(&self) -> [u16; REGISTER_COUNT as usize] {
        let mut bytes = [0u8; 2 * REGISTER_COUNT as usize];
        bytes[0..4].copy_from_slice(&self.voltage_mv.to_be_bytes());
        bytes[4..8].copy_from_slice(&self.current_ma.to_be_bytes());
        bytes[8..12].copy_from_slice(&self.power_mw.to_be_bytes());
        bytes[12..20].copy_from_slice(&self.energy_mwh.to_be_bytes());
        let mut regs = [0u16; REGISTER_COUNT as usize];
        for (r, pair) in regs.iter_mut().zip(bytes.chunks_exact(2)) {
            *r = u16::from_be_bytes([pair[0], pair[1]]);
        }
        regs
    }

    /// Decodes the payload of a full-block read (20 bytes).
    pub fn from_payload(payload: &[u8]) -> Option<Self> {
        if payload.len() != 2 * REGISTER_COUNT as usize {
            return None;
        }
        let u32_at = |i: usize| u32::from_be_bytes(payload[i..i + 4].try_into().expect("4 bytes"));
        Some(Self {
            voltage_mv: u32_at(0),
            current_ma: u32_at(4) as i32,
            power_mw: u32_at(8) as i32,
            energy_mwh: u64::from_be_bytes(payload[12..20].try_into().expect("8 bytes")),
        })
    }
}

/// Big-endian payload for `count` registers starting at `addr`.
pub fn read_registers(block: &RegisterBlock, addr: u16, count: u16) -> Result<Vec<u8>, MeterError> {
    let end = u32::from(addr) + u32::from(count);
    if count == 0 || end > u32::from(REGISTER_COUNT) {
        return Err(MeterError::IllegalAddress { addr, count });
    }
    let regs = block.to_registers();
    Ok(regs[usize::from(addr)..end as usize].iter().flat_map(|r| r.to_be_bytes()).collect())
}

/// Per-step true values of one node plus the cumulative energy at the end
/// of each step.
#[derive(Debug, Clone)]
struct Series {
    start: NaiveDateTime,
    dt: Duration,
    values: Vec<(f64, f64, f64)>,
    cumulative_wh: Vec<f64>,
}

/// A meter answering register reads for one registry node.
///
/// Trace point `k` covers the interval `(time_k - dt, time_k]`; the energy
/// register integrates `|power|` over that piecewise-constant signal. After
/// the last point the last reading is held.
#[derive(Debug, Clone)]
pub struct SimulatedMeter {
    node: RegistryNode,
    series: Arc<Series>,
    noise: Option<ChaCha8Rng>,
}

impl SimulatedMeter {
    pub fn new(node: RegistryNode, trace: &[TracePoint]) -> Result<Self, MeterError> {
        let Some(first) = trace.first() else {
            return Err(MeterError::Unmapped("empty trace".into()));
        };
        let dt = match trace.get(1) {
            Some(second) => second.time - first.time,
            None => Duration::seconds(60),
        };
        let values = trace.iter().map(|p| node_values(&node, p)).collect::<Result<Vec<_>, _>>()?;
        let hours = dt.num_milliseconds() as f64 / 3_600_000.0;
        let mut acc = 0.0;
        let cumulative_wh = values
            .iter()
            .map(|&(_, _, p)| {
                acc += p.abs() * hours;
                acc
            })
            .collect();
        let series = Series { start: first.time - dt, dt, values, cumulative_wh };
        Ok(Self { node, series: Arc::new(series), noise: None })
    }

    /// Enables Class-0.5 reading noise drawn from a seeded generator.
    pub fn with_noise(mut self, seed: u64) -> Self {
        self.noise = Some(ChaCha8Rng::seed_from_u64(seed ^ u64::from(self.node.node_id)));
        self
    }

    pub fn node(&self) -> &RegistryNode {
        &self.node
    }

    /// True (noise-free) reading at `t`.
    pub fn true_reading(&self, t: NaiveDateTime) -> RegisterBlock {
        let s = &self.series;
        if t <= s.start {
            return RegisterBlock::default();
        }
        let elapsed = (t - s.start).num_milliseconds() as f64;
        let step = s.dt.num_milliseconds() as f64;
        // point k covers (start + k*dt, start + (k+1)*dt]
        let k = ((elapsed / step).ceil() as usize).saturating_sub(1);
        let last = s.values.len() - 1;
        let (v, i, p) = s.values[k.min(last)];
        let (before, from) = match k {
            0 => (0.0, 0),
            k if k <= last => (s.cumulative_wh[k - 1], k),
            _ => (s.cumulative_wh[last], last + 1),
        };
        let into = (elapsed - from as f64 * step) / 3_600_000.0;
        let energy = before + p.abs() * into;
        RegisterBlock::from_values(v, i, p, energy)
    }

    /// Reading at `t` as the meter reports it (noise applied if enabled).
    pub fn reading(&mut self, t: NaiveDateTime) -> RegisterBlock {
        let truth = self.true_reading(t);
        let Some(rng) = self.noise.as_mut() else {
            return truth;
        };
        let mut jitter = |x: f64| x * (1.0 + rng.gen_range(-CLASS_05_BOUND..=CLASS_05_BOUND));
        let (v, i, p) = (jitter(truth.voltage()), jitter(truth.current()), jitter(truth.power()));
        RegisterBlock { energy_mwh: truth.energy_mwh, ..RegisterBlock::from_values(v, i, p, 0.0) }
    }

    pub fn respond(&mut self, t: NaiveDateTime, addr: u16, count: u16) -> Result<Vec<u8>, MeterError> {
        let block = self.reading(t);
        read_registers(&block, addr, count)
    }
}

/// (voltage, current, power) of a node at one trace point.
fn node_values(node: &RegistryNode, p: &TracePoint) -> Result<(f64, f64, f64), MeterError> {
    let channel = |c: usize| {
        p.channels
            .get(c.wrapping_sub(1))
            .ok_or_else(|| MeterError::Unmapped(format!("{node}: trace has no channel {c}")))
    };
    let line = |power: f64| {
        let power = power * node.scale;
        (node.nominal_voltage, power / node.nominal_voltage, power)
    };
    Ok(match &node.source {
        MeterSource::PvChannel { channel: c } => {
            let f = channel(*c)?.flows;
            line(f.pv_to_load + f.pv_to_batt)
        }
        MeterSource::InverterOutput { channel: c } => line(channel(*c)?.flows.served()),
        MeterSource::Generator => line(p.channels.iter().map(|c| c.flows.gen_to_load).sum()),
        MeterSource::ServedLoad => line(p.served_load()),
        MeterSource::Bus => (p.bus_voltage, p.bus_current * node.scale, p.bus_power * node.scale),
        MeterSource::Pack { pack } => match p.packs.iter().find(|s| &s.name == pack) {
            Some(s) => (s.voltage, s.current * node.scale, s.power * node.scale),
            // an isolated pack reads zero
            None => (0.0, 0.0, 0.0),
        },
    })
}
