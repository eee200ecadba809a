//! Poll cycles over a field bus, and a driver that collects a whole trace.

use std::fmt;
use std::time::Duration as StdDuration;

use chrono::{Duration, NaiveDateTime};

use super::ledger::{EnergyLedger, IngestOutcome, TelemetryRecord};
use crate::simulation::TracePoint;
use crate::telemetry::{
    decode_frame, encode_frame, FieldBus, Function, LossyBus, MeterError, MeterFrame, NodeRegistry, RegisterBlock,
    SimulatedBus, REGISTER_COUNT, REG_VOLTAGE,
};

pub const DEFAULT_CADENCE_S: i64 = 10;
pub const DEFAULT_TIMEOUT: StdDuration = StdDuration::from_millis(200);
pub const DEFAULT_RETRIES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PollConfig {
    pub timeout: StdDuration,
    /// Extra attempts after the first one fails.
    pub retries: u32,
}

impl Default for PollConfig {
    fn default() -> Self {
        Self { timeout: DEFAULT_TIMEOUT, retries: DEFAULT_RETRIES }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OfflineReason {
    Timeout,
    /// A response arrived but could not be used.
    Decode(String),
    /// The meter answered with an exception code.
    Exception(u8),
}

impl fmt::Display for OfflineReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OfflineReason::Timeout => f.write_str("timeout"),
            OfflineReason::Decode(why) => write!(f, "decode: {why}"),
            OfflineReason::Exception(code) => write!(f, "exception {code:#04x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfflineNode {
    pub node_id: u8,
    pub line: String,
    pub reason: OfflineReason,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PollOutcome {
    pub records: Vec<TelemetryRecord>,
    pub offline: Vec<OfflineNode>,
}

/// Reads the full register block of every node once (plus retries). A node
/// that keeps failing is reported offline; the others are unaffected.
pub fn poll_cycle(
    registry: &NodeRegistry,
    bus: &mut dyn FieldBus,
    config: &PollConfig,
    seq: u32,
    at: NaiveDateTime,
) -> PollOutcome {
    let mut outcome = PollOutcome::default();
    for node in registry.nodes() {
        let request = encode_frame(&MeterFrame::read(node.node_id, REG_VOLTAGE, REGISTER_COUNT as u8))
            .expect("registry node ids are in range");
        let mut reason = OfflineReason::Timeout;
        let mut reading = None;
        for _ in 0..=config.retries {
            match read_once(bus, &request, node.node_id, config.timeout) {
                Ok(block) => {
                    reading = Some(block);
                    break;
                }
                Err(r) => reason = r,
            }
        }
        match reading {
            Some(b) => outcome.records.push(TelemetryRecord {
                node_id: node.node_id,
                line: node.line.clone(),
                timestamp: at,
                seq,
                voltage: b.voltage(),
                current: b.current(),
                power: b.power(),
                energy_wh: b.energy_wh(),
            }),
            None => outcome.offline.push(OfflineNode { node_id: node.node_id, line: node.line.clone(), reason }),
        }
    }
    outcome
}

fn read_once(
    bus: &mut dyn FieldBus,
    request: &[u8],
    node_id: u8,
    timeout: StdDuration,
) -> Result<RegisterBlock, OfflineReason> {
    let bytes = bus.transact(request, timeout).map_err(|_| OfflineReason::Timeout)?;
    let frame = decode_frame(&bytes).map_err(|e| OfflineReason::Decode(e.to_string()))?;
    if frame.node_id != node_id {
        return Err(OfflineReason::Decode(format!("reply from node {} to a request for {node_id}", frame.node_id)));
    }
    match frame.function {
        Function::Reply => RegisterBlock::from_payload(&frame.payload)
            .ok_or_else(|| OfflineReason::Decode(format!("payload of {} bytes, expected 20", frame.payload.len()))),
        Function::Error => Err(OfflineReason::Exception(frame.payload.first().copied().unwrap_or(0))),
        Function::ReadRegs => Err(OfflineReason::Decode("request frame echoed back".into())),
    }
}

/// Issues consecutive cycles with a per-collector seq counter.
#[derive(Debug, Clone)]
pub struct Collector {
    registry: NodeRegistry,
    config: PollConfig,
    next_seq: u32,
}

impl Collector {
    pub fn new(registry: NodeRegistry, config: PollConfig) -> Self {
        Self { registry, config, next_seq: 1 }
    }

    pub fn registry(&self) -> &NodeRegistry {
        &self.registry
    }

    pub fn cycle(&mut self, bus: &mut dyn FieldBus, at: NaiveDateTime) -> PollOutcome {
        let seq = self.next_seq;
        self.next_seq += 1;
        poll_cycle(&self.registry, bus, &self.config, seq, at)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectOptions {
    pub cadence: Duration,
    pub poll: PollConfig,
    /// Probability that a request or a response frame is lost.
    pub loss: f64,
    pub seed: u64,
    /// Seed for Class-0.5 meter noise; noise is off when `None`.
    pub noise_seed: Option<u64>,
    /// Stop after this many cycles.
    pub max_cycles: Option<u64>,
}

impl Default for CollectOptions {
    fn default() -> Self {
        Self {
            cadence: Duration::seconds(DEFAULT_CADENCE_S),
            poll: PollConfig::default(),
            loss: 0.0,
            seed: 0,
            noise_seed: None,
            max_cycles: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CollectSummary {
    pub cycles: u64,
    pub records: u64,
    pub offline: u64,
    pub duplicates: u64,
    pub resets: u64,
}

/// Polls meters fed by `trace` every `cadence` from one cadence after the
/// trace start up to its last point and ingests everything into `ledger`.
pub fn collect_trace(
    trace: &[TracePoint],
    registry: &NodeRegistry,
    options: &CollectOptions,
    ledger: &mut EnergyLedger,
) -> Result<CollectSummary, MeterError> {
    let mut summary = CollectSummary::default();
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return Ok(summary);
    };
    let dt = trace.get(1).map_or(Duration::seconds(60), |p| p.time - first.time);
    let mut sim = SimulatedBus::new(registry, trace)?;
    if let Some(seed) = options.noise_seed {
        sim = sim.with_noise(seed);
    }
    let mut bus = LossyBus::new(sim, options.loss, options.seed);
    let mut collector = Collector::new(registry.clone(), options.poll);
    let mut at = first.time - dt + options.cadence;
    while at <= last.time && options.max_cycles.is_none_or(|m| summary.cycles < m) {
        bus.inner_mut().set_time(at);
        let outcome = collector.cycle(&mut bus, at);
        summary.cycles += 1;
        summary.offline += outcome.offline.len() as u64;
        for r in outcome.records {
            summary.records += 1;
            match ledger.ingest(r) {
                IngestOutcome::Appended => {}
                IngestOutcome::Duplicate => summary.duplicates += 1,
                IngestOutcome::MonotonicityViolation => summary.resets += 1,
            }
        }
        at += options.cadence;
    }
    Ok(summary)
}
