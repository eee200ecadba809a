//! Idempotent, order-independent store of telemetry records.

use std::collections::BTreeMap;
use std::ops::Bound;
use std::sync::{Arc, RwLock};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One measurement from one energy node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub node_id: u8,
    pub line: String,
    pub timestamp: NaiveDateTime,
    /// Per-node poll counter.
    pub seq: u32,
    pub voltage: f64,
    pub current: f64,
    pub power: f64,
    /// Cumulative energy register.
    pub energy_wh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    #[serde(flatten)]
    pub record: TelemetryRecord,
    /// The energy register went down relative to the previous seq of the
    /// same node: the meter was reset.
    #[serde(default)]
    pub reset: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Appended,
    /// `(node_id, seq)` already present; nothing changed.
    Duplicate,
    /// Stored, and annotated as a meter reset because its energy register is
    /// below that of the preceding seq.
    MonotonicityViolation,
}

/// Records keyed by `(node_id, seq)`. The contents depend only on the set of
/// records ingested, not on their arrival order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    entries: BTreeMap<(u8, u32), LedgerEntry>,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ingest(&mut self, record: TelemetryRecord) -> IngestOutcome {
        let key = (record.node_id, record.seq);
        if self.entries.contains_key(&key) {
            return IngestOutcome::Duplicate;
        }
        let reset = self.predecessor(key).is_some_and(|p| p.record.energy_wh > record.energy_wh);
        let energy = record.energy_wh;
        self.entries.insert(key, LedgerEntry { record, reset });
        if let Some(next_key) = self.successor_key(key) {
            let next = self.entries.get_mut(&next_key).expect("successor exists");
            next.reset = energy > next.record.energy_wh;
        }
        if reset {
            IngestOutcome::MonotonicityViolation
        } else {
            IngestOutcome::Appended
        }
    }

    fn predecessor(&self, key: (u8, u32)) -> Option<&LedgerEntry> {
        self.entries.range((Bound::Included((key.0, 0)), Bound::Excluded(key))).next_back().map(|(_, e)| e)
    }

    fn successor_key(&self, key: (u8, u32)) -> Option<(u8, u32)> {
        self.entries.range((Bound::Excluded(key), Bound::Included((key.0, u32::MAX)))).next().map(|(k, _)| *k)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, node_id: u8, seq: u32) -> bool {
        self.entries.contains_key(&(node_id, seq))
    }

    /// All entries ordered by `(node_id, seq)`.
    pub fn entries(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.values()
    }

    /// Entries of one node in seq order.
    pub fn node_entries(&self, node_id: u8) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.range((node_id, 0)..=(node_id, u32::MAX)).map(|(_, e)| e)
    }

    pub fn node_ids(&self) -> Vec<u8> {
        let mut ids: Vec<u8> = self.entries.keys().map(|k| k.0).collect();
        ids.dedup();
        ids
    }

    /// Highest seq seen for a node.
    pub fn high_water(&self, node_id: u8) -> Option<u32> {
        self.entries.range((node_id, 0)..=(node_id, u32::MAX)).next_back().map(|(k, _)| k.1)
    }

    /// One JSON object per entry, newline-terminated, in key order.
    pub fn canonical_lines(&self) -> String {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&serde_json::to_string(e).expect("entries serialise"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_lines().as_bytes()))
    }
}

/// A ledger shared between one writer and any number of readers.
#[derive(Debug, Clone, Default)]
pub struct SharedLedger {
    inner: Arc<RwLock<EnergyLedger>>,
}

impl SharedLedger {
    pub fn new(ledger: EnergyLedger) -> Self {
        Self { inner: Arc::new(RwLock::new(ledger)) }
    }

    pub fn ingest(&self, record: TelemetryRecord) -> IngestOutcome {
        self.inner.write().expect("ledger lock poisoned").ingest(record)
    }

    /// Runs `f` against a consistent view of the ledger.
    pub fn read<R>(&self, f: impl FnOnce(&EnergyLedger) -> R) -> R {
        f(&self.inner.read().expect("ledger lock poisoned"))
    }

    /// Copy of the current contents.
    pub fn view(&self) -> EnergyLedger {
        self.read(EnergyLedger::clone)
    }
}
