//! CSV export of a trace: one row per (time, channel).

use std::io::{self, Write};

use super::engine::TracePoint;

pub const TRACE_CSV_HEADER: &str = "time,bus_voltage_V,bus_current_A,bus_power_W,soc_pct,ch,pv_to_load_W,pv_to_batt_W,batt_to_load_W,gen_to_load_W,curtailed_W,unserved_W";

pub fn write_trace_csv<W: Write>(trace: &[TracePoint], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for p in trace {
        let time = p.time.format("%Y-%m-%dT%H:%M:%S");
        for (i, c) in p.channels.iter().enumerate() {
            let f = &c.flows;
            let row = [
                fixed(p.bus_voltage, 1),
                fixed(p.bus_current, 1),
                fixed(p.bus_power, 1),
                fixed(p.soc, 2),
                (i + 1).to_string(),
                fixed(f.pv_to_load, 1),
                fixed(f.pv_to_batt, 1),
                fixed(f.batt_to_load, 1),
                fixed(f.gen_to_load, 1),
                fixed(f.curtailed, 1),
                fixed(f.unserved, 1),
            ];
            writeln!(out, "{time},{}", row.join(","))?;
        }
    }
    Ok(())
}

/// Fixed-point formatting that never prints a negative zero.
fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}
