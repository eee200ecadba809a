//! Component models, simulator, meter protocol and energy ledger for an
//! off-grid solar installation with a hybrid lead-acid/LFP battery bus.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod ems;
pub mod inverter;
pub mod pv;
pub mod simulation;
pub mod telemetry;
