//! In-process half-duplex field bus: a request frame goes out, at most one
//! response frame comes back.

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::frame::{decode_frame, encode_frame, Function, MeterFrame, EXC_ILLEGAL_ADDRESS, EXC_ILLEGAL_FUNCTION};
use super::meter::{MeterError, SimulatedMeter};
use super::registry::NodeRegistry;
use crate::simulation::TracePoint;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("no response within {0:?}")]
    Timeout(Duration),
}

pub trait FieldBus {
    /// Sends one request frame and returns the raw response bytes.
    fn transact(&mut self, request: &[u8], timeout: Duration) -> Result<Vec<u8>, LinkError>;
}

/// Meters for every registry node, answering at a settable clock time.
#[derive(Debug, Clone)]
pub struct SimulatedBus {
    meters: BTreeMap<u8, SimulatedMeter>,
    now: NaiveDateTime,
}

impl SimulatedBus {
    pub fn new(registry: &NodeRegistry, trace: &[TracePoint]) -> Result<Self, MeterError> {
        let meters = registry
            .nodes()
            .iter()
            .map(|n| Ok((n.node_id, SimulatedMeter::new(n.clone(), trace)?)))
            .collect::<Result<_, MeterError>>()?;
        let now = trace.first().map(|p| p.time).unwrap_or_default();
        Ok(Self { meters, now })
    }

    /// Turns on Class-0.5 reading noise for every meter.
    pub fn with_noise(mut self, seed: u64) -> Self {
        self.meters = std::mem::take(&mut self.meters).into_iter().map(|(id, m)| (id, m.with_noise(seed))).collect();
        self
    }

    pub fn set_time(&mut self, now: NaiveDateTime) {
        self.now = now;
    }

    pub fn now(&self) -> NaiveDateTime {
        self.now
    }

    pub fn meter(&self, node_id: u8) -> Option<&SimulatedMeter> {
        self.meters.get(&node_id)
    }

    fn answer(&mut self, request: &MeterFrame) -> Option<MeterFrame> {
        let meter = self.meters.get_mut(&request.node_id)?;
        let (node, addr) = (request.node_id, request.register_addr);
        Some(match request.function {
            Function::ReadRegs => match meter.respond(self.now, addr, u16::from(request.count_or_len)) {
                Ok(payload) => MeterFrame::reply(node, addr, payload),
                Err(_) => MeterFrame::error(node, addr, EXC_ILLEGAL_ADDRESS),
            },
            Function::Reply | Function::Error => MeterFrame::error(node, addr, EXC_ILLEGAL_FUNCTION),
        })
    }
}

impl FieldBus for SimulatedBus {
    fn transact(&mut self, request: &[u8], timeout: Duration) -> Result<Vec<u8>, LinkError> {
        // a garbled request or an absent node both mean silence on the line
        let frame = decode_frame(request).map_err(|_| LinkError::Timeout(timeout))?;
        let reply = self.answer(&frame).ok_or(LinkError::Timeout(timeout))?;
        Ok(encode_frame(&reply).expect("meter replies are well-formed"))
    }
}

/// Drops request and response frames independently with probability
/// `loss`, deterministically for a given seed.
#[derive(Debug, Clone)]
pub struct LossyBus<B> {
    inner: B,
    loss: f64,
    rng: ChaCha8Rng,
}

impl<B: FieldBus> LossyBus<B> {
    /// Panics unless `loss` is in `[0, 1]`.
    pub fn new(inner: B, loss: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&loss), "loss probability {loss} outside [0, 1]");
        Self { inner, loss, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut B {
        &mut self.inner
    }
}

impl<B: FieldBus> FieldBus for LossyBus<B> {
    fn transact(&mut self, request: &[u8], timeout: Duration) -> Result<Vec<u8>, LinkError> {
        if self.rng.gen_bool(self.loss) {
            return Err(LinkError::Timeout(timeout));
        }
        let response = self.inner.transact(request, timeout)?;
        if self.rng.gen_bool(self.loss) {
            return Err(LinkError::Timeout(timeout));
        }
        Ok(response)
    }
}
