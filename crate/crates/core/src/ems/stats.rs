//! Gap detection and period energy statistics integrated from power samples.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use serde::Serialize;

use super::ledger::{EnergyLedger, LedgerEntry};
use crate::telemetry::{classify_line, LineClass};

/// Maximal intervals between consecutive records of `node_id` that are more
/// than twice `cadence` apart.
///
/// Panics if `cadence` is not positive.
pub fn detect_gaps(ledger: &EnergyLedger, node_id: u8, cadence: Duration) -> Vec<(NaiveDateTime, NaiveDateTime)> {
    assert!(cadence > Duration::zero(), "cadence must be positive");
    let times = sorted_times(ledger, node_id);
    times.windows(2).filter(|w| w[1] - w[0] > cadence * 2).map(|w| (w[0], w[1])).collect()
}

fn sorted_times(ledger: &EnergyLedger, node_id: u8) -> Vec<NaiveDateTime> {
    let mut times: Vec<NaiveDateTime> = ledger.node_entries(node_id).map(|e| e.record.timestamp).collect();
    times.sort();
    times
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Period {
    Day(NaiveDate),
    Month { year: i32, month: u32 },
    Year(i32),
}

impl Period {
    pub fn contains(&self, date: NaiveDate) -> bool {
        match *self {
            Period::Day(d) => d == date,
            Period::Month { year, month } => date.year() == year && date.month() == month,
            Period::Year(year) => date.year() == year,
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Day(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Period::Month { year, month } => write!(f, "{year:04}-{month:02}"),
            Period::Year(year) => write!(f, "{year:04}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineFilter {
    All,
    Only(Vec<String>),
}

impl LineFilter {
    fn admits(&self, line: &str) -> bool {
        match self {
            LineFilter::All => true,
            LineFilter::Only(lines) => lines.iter().any(|l| l == line),
        }
    }

    pub fn label(&self) -> String {
        match self {
            LineFilter::All => "all".into(),
            LineFilter::Only(lines) => lines.join("+"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyStats {
    pub period: Period,
    pub line: String,
    pub pv_generation_wh: f64,
    pub consumption_wh: f64,
    pub generator_generation_wh: f64,
}

impl EnergyStats {
    fn zero(period: Period, line: String) -> Self {
        Self { period, line, pv_generation_wh: 0.0, consumption_wh: 0.0, generator_generation_wh: 0.0 }
    }

    pub fn generation_wh(&self) -> f64 {
        self.pv_generation_wh + self.generator_generation_wh
    }

    fn add(&mut self, other: &EnergyStats) {
        self.pv_generation_wh += other.pv_generation_wh;
        self.consumption_wh += other.consumption_wh;
        self.generator_generation_wh += other.generator_generation_wh;
    }
}

/// Per-day, per-line energy integrated once from a ledger.
///
/// Consecutive records of a node are joined by the trapezoidal rule; pairs
/// more than twice the cadence apart (gaps) contribute nothing, so gaps
/// undercount. Segments that cross midnight are split at midnight.
/// Monthly figures are sums of daily ones and yearly figures sums of
/// monthly ones, in calendar order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyIndex {
    daily: BTreeMap<NaiveDate, BTreeMap<String, f64>>,
}

impl EnergyIndex {
    pub fn build(ledger: &EnergyLedger, cadence: Duration) -> Self {
        let max_gap = cadence * 2;
        let mut daily: BTreeMap<NaiveDate, BTreeMap<String, f64>> = BTreeMap::new();
        for node in ledger.node_ids() {
            let mut entries: Vec<&LedgerEntry> = ledger.node_entries(node).collect();
            entries.sort_by_key(|e| e.record.timestamp);
            for w in entries.windows(2) {
                let (a, b) = (&w[0].record, &w[1].record);
                let span = b.timestamp - a.timestamp;
                if span <= Duration::zero() || span > max_gap {
                    continue;
                }
                for (date, wh) in split_trapezoid(a.timestamp, a.power, b.timestamp, b.power) {
                    *daily.entry(date).or_default().entry(a.line.clone()).or_insert(0.0) += wh;
                }
            }
        }
        Self { daily }
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.daily.keys().copied()
    }

    pub fn months(&self) -> Vec<(i32, u32)> {
        let mut m: Vec<(i32, u32)> = self.days().map(|d| (d.year(), d.month())).collect();
        m.dedup();
        m
    }

    pub fn years(&self) -> Vec<i32> {
        let mut y: Vec<i32> = self.days().map(|d| d.year()).collect();
        y.dedup();
        y
    }

    pub fn line_energy(&self, date: NaiveDate, line: &str) -> f64 {
        self.daily.get(&date).and_then(|l| l.get(line)).copied().unwrap_or(0.0)
    }

    pub fn daily(&self, date: NaiveDate, filter: &LineFilter) -> EnergyStats {
        let mut s = EnergyStats::zero(Period::Day(date), filter.label());
        let Some(lines) = self.daily.get(&date) else {
            return s;
        };
        for (line, &wh) in lines {
            if !filter.admits(line) {
                continue;
            }
            match classify_line(line) {
                LineClass::Pv => s.pv_generation_wh += wh,
                LineClass::Generator => s.generator_generation_wh += wh,
                LineClass::Consumption => s.consumption_wh += wh,
                LineClass::Internal => {}
            }
        }
        s
    }

    pub fn monthly(&self, year: i32, month: u32, filter: &LineFilter) -> EnergyStats {
        let period = Period::Month { year, month };
        let mut s = EnergyStats::zero(period, filter.label());
        for date in self.days().filter(|d| period.contains(*d)) {
            s.add(&self.daily(date, filter));
        }
        s
    }

    pub fn annual(&self, year: i32, filter: &LineFilter) -> EnergyStats {
        let mut s = EnergyStats::zero(Period::Year(year), filter.label());
        for (y, m) in self.months().into_iter().filter(|(y, _)| *y == year) {
            s.add(&self.monthly(y, m, filter));
        }
        s
    }

    pub fn stats(&self, period: Period, filter: &LineFilter) -> EnergyStats {
        match period {
            Period::Day(d) => self.daily(d, filter),
            Period::Month { year, month } => self.monthly(year, month, filter),
            Period::Year(y) => self.annual(y, filter),
        }
    }

    /// Daily, then monthly, then annual stats for every period with data.
    pub fn all_stats(&self, filter: &LineFilter) -> Vec<EnergyStats> {
        let mut out: Vec<EnergyStats> = self.days().map(|d| self.daily(d, filter)).collect();
        out.extend(self.months().into_iter().map(|(y, m)| self.monthly(y, m, filter)));
        out.extend(self.years().into_iter().map(|y| self.annual(y, filter)));
        out
    }
}

/// Trapezoid between two samples, split into per-date pieces.
fn split_trapezoid(t0: NaiveDateTime, p0: f64, t1: NaiveDateTime, p1: f64) -> Vec<(NaiveDate, f64)> {
    let total_s = (t1 - t0).num_milliseconds() as f64 / 1000.0;
    let power_at = |t: NaiveDateTime| p0 + (p1 - p0) * ((t - t0).num_milliseconds() as f64 / 1000.0) / total_s;
    let mut pieces = Vec::new();
    let (mut a, mut pa) = (t0, p0);
    while a.date() < t1.date() {
        let midnight = (a.date() + Duration::days(1)).and_hms_opt(0, 0, 0).expect("midnight exists");
        let pm = power_at(midnight);
        pieces.push((a.date(), wh(a, pa, midnight, pm)));
        (a, pa) = (midnight, pm);
    }
    if t1 > a {
        pieces.push((a.date(), wh(a, pa, t1, p1)));
    }
    pieces
}

fn wh(t0: NaiveDateTime, p0: f64, t1: NaiveDateTime, p1: f64) -> f64 {
    let hours = (t1 - t0).num_milliseconds() as f64 / 3_600_000.0;
    0.5 * (p0 + p1) * hours
}

/// Convenience wrapper building an [`EnergyIndex`] for one query.
pub fn aggregate(ledger: &EnergyLedger, period: Period, filter: &LineFilter, cadence: Duration) -> EnergyStats {
    EnergyIndex::build(ledger, cadence).stats(period, filter)
}

/// Energy counted by a node's cumulative register between `from` and `to`
/// (inclusive), bridging meter resets.
pub fn register_energy(ledger: &EnergyLedger, node_id: u8, from: NaiveDateTime, to: NaiveDateTime) -> f64 {
    let mut entries: Vec<&LedgerEntry> =
        ledger.node_entries(node_id).filter(|e| e.record.timestamp >= from && e.record.timestamp <= to).collect();
    entries.sort_by_key(|e| e.record.seq);
    entries
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].record.energy_wh, w[1].record.energy_wh);
            if b >= a {
                b - a
            } else {
                b
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ems::TelemetryRecord;

    fn at(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap()
    }

    fn rec(seq: u32, t: NaiveDateTime, power: f64) -> TelemetryRecord {
        TelemetryRecord {
            node_id: 1,
            line: "PV1".into(),
            timestamp: t,
            seq,
            voltage: 119.0,
            current: power / 119.0,
            power,
            energy_wh: 0.0,
        }
    }

    #[test]
    fn gap_example() {
        let mut l = EnergyLedger::new();
        let start = at("2021-08-18 06:00:00");
        let mut seq = 0;
        for s in (0..=10).step_by(10).chain((60..=120).step_by(10)) {
            seq += 1;
            l.ingest(rec(seq, start + Duration::seconds(s), 100.0));
        }
        let gaps = detect_gaps(&l, 1, Duration::seconds(10));
        assert_eq!(gaps, vec![(at("2021-08-18 06:00:10"), at("2021-08-18 06:01:00"))]);
        let mut single = EnergyLedger::new();
        single.ingest(rec(1, start, 1.0));
        assert!(detect_gaps(&single, 1, Duration::seconds(10)).is_empty());
    }

    #[test]
    fn midnight_split() {
        let pieces = split_trapezoid(at("2021-08-18 23:59:00"), 0.0, at("2021-08-19 00:01:00"), 120.0);
        assert_eq!(pieces.len(), 2);
        assert!((pieces[0].1 - 0.5 * 60.0 / 60.0).abs() < 1e-12);
        assert!((pieces[1].1 - 1.5 * 60.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn period_labels() {
        assert_eq!(Period::Day(NaiveDate::from_ymd_opt(2021, 8, 18).unwrap()).to_string(), "2021-08-18");
        assert_eq!(Period::Month { year: 2021, month: 8 }.to_string(), "2021-08");
        assert_eq!(Period::Year(2021).to_string(), "2021");
    }
}
