//! Meter wire protocol, node registry and simulated meters.

mod bus;
mod crc;
mod frame;
mod meter;
mod registry;

pub use bus::{FieldBus, LinkError, LossyBus, SimulatedBus};
pub use crc::crc16;
pub use frame::{
    decode_frame, encode_frame, FrameError, Function, MeterFrame, EXC_ILLEGAL_ADDRESS, EXC_ILLEGAL_FUNCTION,
    MAX_NODE_ID, MAX_READ_COUNT, MIN_NODE_ID, START_BYTE,
};
pub use meter::{
    read_registers, MeterError, RegisterBlock, SimulatedMeter, CLASS_05_BOUND, REGISTER_COUNT, REG_CURRENT, REG_ENERGY,
    REG_POWER, REG_VOLTAGE,
};
pub use registry::{
    classify_line, LineClass, MeterSource, NodeKind, NodeRegistry, RegistryError, RegistryNode, CONSUMPTION_LINES,
    GENERATOR_LINE, PV_LINES, REGISTRY_PRESETS,
};
