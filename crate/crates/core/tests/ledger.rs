use std::fs;
use std::io::Write;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use offgrid_core::ems::{
    aggregate, latest_snapshot, list_snapshots, register_energy, replay_log, restore, snapshot, EnergyIndex,
    EnergyLedger, IngestOutcome, LedgerLog, LineFilter, Period, SharedLedger, StorageError, TelemetryRecord,
};
use proptest::prelude::*;

fn t0() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2021, 8, 18).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn rec(node_id: u8, line: &str, seq: u32, secs: i64, power: f64, energy_wh: f64) -> TelemetryRecord {
    TelemetryRecord {
        node_id,
        line: line.into(),
        timestamp: t0() + Duration::seconds(secs),
        seq,
        voltage: 48.0,
        current: power / 48.0,
        power,
        energy_wh,
    }
}

/// Two days of 10 s samples for a PV line and a load line.
fn two_days() -> Vec<TelemetryRecord> {
    let mut out = Vec::new();
    for i in 0..(2 * 8640) {
        let secs = i64::from(i) * 10;
        out.push(rec(1, "PV1", i + 1, secs, 1000.0 + f64::from(i % 7), 0.0));
        out.push(rec(9, "LineGeneral", i + 1, secs, 400.0, 0.0));
    }
    out
}

fn ledger_of(records: impl IntoIterator<Item = TelemetryRecord>) -> EnergyLedger {
    let mut l = EnergyLedger::new();
    for r in records {
        l.ingest(r);
    }
    l
}

#[test]
fn duplicates_leave_the_digest_alone() {
    let records = two_days();
    let mut l = ledger_of(records.clone());
    let digest = l.digest();
    for r in records.iter().step_by(13).cloned() {
        assert_eq!(l.ingest(r), IngestOutcome::Duplicate);
    }
    assert_eq!(l.digest(), digest);
}

#[test]
fn daily_monthly_annual_add_up() {
    let l = ledger_of(two_days());
    let idx = EnergyIndex::build(&l, Duration::seconds(10));
    let days: Vec<NaiveDate> = idx.days().collect();
    assert_eq!(days.len(), 2);
    let all = LineFilter::All;
    let month = idx.monthly(2021, 8, &all);
    let d: Vec<_> = days.iter().map(|&d| idx.daily(d, &all)).collect();
    assert_eq!(month.consumption_wh, d[0].consumption_wh + d[1].consumption_wh);
    assert_eq!(month.pv_generation_wh, d[0].pv_generation_wh + d[1].pv_generation_wh);
    assert_eq!(idx.annual(2021, &all).consumption_wh, month.consumption_wh);
    // 400 W for the first day's 86390 s of closed intervals plus the bridge to midnight
    assert!((d[0].consumption_wh - 400.0 * 24.0).abs() < 1e-6);
    let pv_only = aggregate(&l, Period::Day(days[0]), &LineFilter::Only(vec!["PV1".into()]), Duration::seconds(10));
    assert_eq!(pv_only.consumption_wh, 0.0);
    assert_eq!(pv_only.pv_generation_wh, d[0].pv_generation_wh);
    assert_eq!(pv_only.line, "PV1");
}

#[test]
fn gaps_undercount() {
    let records: Vec<_> = two_days().into_iter().filter(|r| !(3000..3100).contains(&r.seq)).collect();
    let full = EnergyIndex::build(&ledger_of(two_days()), Duration::seconds(10));
    let holed = EnergyIndex::build(&ledger_of(records), Duration::seconds(10));
    let day = full.days().next().unwrap();
    let lost = full.daily(day, &LineFilter::All).consumption_wh - holed.daily(day, &LineFilter::All).consumption_wh;
    // 101 intervals of 10 s at 400 W
    assert!((lost - 400.0 * 1010.0 / 3600.0).abs() < 1e-6, "{lost}");
}

#[test]
fn register_energy_bridges_resets() {
    let mut l = EnergyLedger::new();
    l.ingest(rec(3, "PV3", 1, 0, 0.0, 100.0));
    l.ingest(rec(3, "PV3", 2, 10, 0.0, 150.0));
    assert_eq!(l.ingest(rec(3, "PV3", 3, 20, 0.0, 20.0)), IngestOutcome::MonotonicityViolation);
    l.ingest(rec(3, "PV3", 4, 30, 0.0, 50.0));
    let e = register_energy(&l, 3, t0(), t0() + Duration::seconds(30));
    assert!((e - (50.0 + 20.0 + 30.0)).abs() < 1e-12);
}

#[test]
fn shared_ledger_readers_see_prefixes() {
    let shared = SharedLedger::default();
    let records = two_days();
    std::thread::scope(|scope| {
        let writer = shared.clone();
        let feed = &records;
        scope.spawn(move || {
            for r in feed.iter().take(2000).cloned() {
                writer.ingest(r);
            }
        });
        for _ in 0..50 {
            let n = shared.read(EnergyLedger::len);
            assert!(n <= 2000);
        }
    });
    assert_eq!(shared.view().len(), 2000);
}

#[test]
fn snapshot_rotation_and_restore() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = ledger_of(two_days().into_iter().take(500));
    assert!(matches!(snapshot(&ledger, dir.path(), 1), Err(StorageError::InvalidKeep(1))));
    for _ in 0..5 {
        snapshot(&ledger, dir.path(), 3).unwrap();
    }
    let kept = list_snapshots(dir.path()).unwrap();
    assert_eq!(kept.len(), 3);
    assert!(kept[2].ends_with("ledger-00000005.snap"));
    let latest = latest_snapshot(dir.path()).unwrap().unwrap();
    let back = restore(&latest).unwrap();
    assert_eq!(back, ledger);
    assert_eq!(back.digest(), ledger.digest());

    let empty = EnergyLedger::new();
    let p = snapshot(&empty, dir.path(), 3).unwrap();
    assert_eq!(restore(&p).unwrap(), empty);
}

#[test]
fn corrupted_snapshots_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = ledger_of(two_days().into_iter().take(50));
    let path = snapshot(&ledger, dir.path(), 2).unwrap();
    let good = fs::read(&path).unwrap();

    let mut flipped = good.clone();
    flipped[good.len() / 2] ^= 0x01;
    fs::write(&path, &flipped).unwrap();
    assert!(matches!(restore(&path), Err(StorageError::Integrity(_))));

    fs::write(&path, &good[..good.len() - 10]).unwrap();
    assert!(matches!(restore(&path), Err(StorageError::Integrity(_))));

    fs::write(&path, b"").unwrap();
    assert!(matches!(restore(&path), Err(StorageError::Integrity(_))));

    fs::write(&path, &good).unwrap();
    assert_eq!(restore(&path).unwrap(), ledger);
}

#[test]
fn log_replay_skips_a_torn_tail_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    let records: Vec<_> = two_days().into_iter().take(20).collect();
    let mut log = LedgerLog::open(&path).unwrap();
    for r in &records {
        log.append(r).unwrap();
    }
    log.sync().unwrap();
    drop(log);
    let (l, stats) = replay_log(&path).unwrap();
    assert_eq!(l, ledger_of(records.clone()));
    assert!(!stats.torn_tail);

    fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"node_id\":1,\"li").unwrap();
    let (torn, stats) = replay_log(&path).unwrap();
    assert!(stats.torn_tail);
    assert_eq!(torn, l);

    let mut text = fs::read_to_string(&path).unwrap();
    text.insert_str(0, "garbage\n");
    fs::write(&path, text).unwrap();
    assert!(matches!(replay_log(&path), Err(StorageError::Integrity(_))));
}

proptest! {
    #[test]
    fn arrival_order_does_not_matter(
        records in prop::collection::vec((1u8..4, 1u32..40, 0.0f64..1000.0), 1..120),
        shuffle_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let records: Vec<TelemetryRecord> = records
            .into_iter()
            .map(|(node, seq, e)| rec(node, "PV1", seq, i64::from(seq) * 10, e, e))
            .collect();
        // first arrival of each key wins, so dedupe before comparing orders
        let mut seen = std::collections::BTreeSet::new();
        let unique: Vec<_> = records.into_iter().filter(|r| seen.insert((r.node_id, r.seq))).collect();
        let mut shuffled = unique.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed));
        let a = ledger_of(unique.clone());
        let b = ledger_of(shuffled);
        prop_assert_eq!(a.digest(), b.digest());
        prop_assert_eq!(&a, &b);
        for r in unique {
            let mut c = a.clone();
            prop_assert_eq!(c.ingest(r), IngestOutcome::Duplicate);
            prop_assert_eq!(&c, &a);
        }
    }

    #[test]
    fn reset_flags_match_neighbours(energies in prop::collection::vec(0.0f64..100.0, 2..40)) {
        let l = ledger_of(energies.iter().enumerate().map(|(i, &e)| rec(1, "PV1", i as u32 + 1, i as i64 * 10, 0.0, e)));
        let entries: Vec<_> = l.node_entries(1).collect();
        prop_assert!(!entries[0].reset);
        for w in entries.windows(2) {
            prop_assert_eq!(w[1].reset, w[1].record.energy_wh < w[0].record.energy_wh);
        }
    }
}
