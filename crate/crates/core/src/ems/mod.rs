//! Energy management: polling, the telemetry ledger, statistics and
//! persistence.

mod collector;
mod ledger;
mod report;
mod stats;
mod store;

pub use collector::{
    collect_trace, poll_cycle, CollectOptions, CollectSummary, Collector, OfflineNode, OfflineReason, PollConfig,
    PollOutcome, DEFAULT_CADENCE_S, DEFAULT_RETRIES, DEFAULT_TIMEOUT,
};
pub use ledger::{EnergyLedger, IngestOutcome, LedgerEntry, SharedLedger, TelemetryRecord};
pub use report::{render_report, ReportFormat, REPORT_CSV_HEADER};
pub use stats::{aggregate, detect_gaps, register_energy, EnergyIndex, EnergyStats, LineFilter, Period};
pub use store::{
    latest_snapshot, list_snapshots, replay_log, restore, snapshot, LedgerLog, ReplayStats, StorageError, MIN_KEEP,
    SNAPSHOT_MAGIC,
};
