//! Fits the two free parameters of the `2021-default` preset: the irradiance
//! scale (peak charge current of 46 A) and the LFP pack's initial state of
//! charge (full charge at 09:40). The lead-acid pack starts at whatever SoC
//! puts it at the same open-circuit voltage as the LFP pack (capped at
//! 100 %), so the two start rested and connectable.
//!
//! Usage: `cargo run -p offgrid-core --example calibrate [-- --write]`
//! `--write` updates `presets/2021-default.toml` in place.

use chrono::{NaiveDateTime, NaiveTime};
use offgrid_core::battery::{pack_ocv, reassemble_pack, BatteryPack};
use offgrid_core::simulation::{run_scenario, PackSection, Scenario, ScenarioFile};

const PRESET_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/presets/2021-default.toml");
const TARGET_PEAK_A: f64 = 46.0;
const TARGET_FULL: (u32, u32) = (9, 40);
/// Above this the LFP pack rests more than 0.5 V above a full lead-acid
/// pack and the bus refuses to connect.
const MAX_LFP_SOC0: f64 = 58.0;

struct Metrics {
    peak_current: f64,
    peak_time: NaiveDateTime,
    full_time: Option<NaiveDateTime>,
    max_voltage: f64,
    bus_soc0: f64,
}

fn measure(file: &ScenarioFile) -> Metrics {
    let scenario = Scenario::from_file(file.clone()).expect("preset validates");
    let bus_soc0 = scenario.bus.soc();
    let trace = run_scenario(&scenario).expect("preset runs");
    let peak = trace.iter().max_by(|a, b| a.bus_current.total_cmp(&b.bus_current)).expect("non-empty trace");
    Metrics {
        peak_current: peak.bus_current,
        peak_time: peak.time,
        full_time: trace.iter().find(|p| p.soc >= 100.0).map(|p| p.time),
        max_voltage: trace.iter().map(|p| p.bus_voltage).fold(0.0, f64::max),
        bus_soc0,
    }
}

fn minutes_of(t: NaiveDateTime) -> f64 {
    let d = t.time() - NaiveTime::MIN;
    d.num_seconds() as f64 / 60.0
}

fn pack_index(file: &ScenarioFile, name: &str) -> usize {
    file.packs.iter().position(|p| p.name == name).expect("preset pack present")
}

fn built(section: &PackSection) -> BatteryPack {
    let pack = BatteryPack::new(section.block, section.series, section.parallel).expect("valid pack");
    match section.reassemble_to_v {
        Some(v) => reassemble_pack(&pack, v).expect("valid reassembly"),
        None => pack,
    }
}

/// Sets the LFP soc0 and moves the lead-acid soc0 to the matching OCV.
fn set_lfp_soc(file: &mut ScenarioFile, soc: f64) {
    let (lfp, lead) = (pack_index(file, "lfp"), pack_index(file, "lead_acid"));
    file.packs[lfp].soc0 = soc;
    let v = pack_ocv(&built(&file.packs[lfp]), soc);
    let lead_pack = built(&file.packs[lead]);
    let lead_soc = bisect(0.0, 100.0, true, |s| pack_ocv(&lead_pack, s) - v);
    file.packs[lead].soc0 = ((lead_soc * 100.0).round() / 100.0).min(100.0);
}

/// Bisection on a monotone function; `increasing` gives its direction.
fn bisect(mut lo: f64, mut hi: f64, increasing: bool, mut f: impl FnMut(f64) -> f64) -> f64 {
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn main() {
    let write = std::env::args().any(|a| a == "--write");
    let text = std::fs::read_to_string(PRESET_PATH).expect("read preset");
    let mut file = ScenarioFile::from_toml(&text).expect("parse preset");
    let lfp = pack_index(&file, "lfp");
    let lead = pack_index(&file, "lead_acid");
    let target_full = f64::from(TARGET_FULL.0 * 60 + TARGET_FULL.1);

    for round in 0..4 {
        let scale = bisect(0.3, 1.0 / 1.2, true, |s| {
            let mut f = file.clone();
            f.irradiance.scale = s;
            measure(&f).peak_current - TARGET_PEAK_A
        });
        file.irradiance.scale = (scale * 1e4).round() / 1e4;

        let soc0 = bisect(20.0, MAX_LFP_SOC0, false, |soc| {
            let mut f = file.clone();
            set_lfp_soc(&mut f, soc);
            match measure(&f).full_time {
                Some(t) => minutes_of(t) - target_full,
                None => f64::INFINITY,
            }
        });
        set_lfp_soc(&mut file, (soc0 * 100.0).round() / 100.0);

        let m = measure(&file);
        println!(
            "round {round}: scale={:.4} lfp_soc0={:.2} lead_soc0={:.2} bus_soc0={:.2} peak={:.2} A at {} full at {} max V={:.2}",
            file.irradiance.scale,
            file.packs[lfp].soc0,
            file.packs[lead].soc0,
            m.bus_soc0,
            m.peak_current,
            m.peak_time.time(),
            m.full_time.map(|t| t.time().to_string()).unwrap_or_else(|| "never".into()),
            m.max_voltage,
        );
    }

    if write {
        let updated = rewrite(&text, file.irradiance.scale, file.packs[lfp].soc0, file.packs[lead].soc0);
        std::fs::write(PRESET_PATH, updated).expect("write preset");
        println!("updated {PRESET_PATH}");
    }
}

/// Replaces the irradiance `scale` and the packs' `soc0` lines, keeping the
/// rest of the file (comments, layout) untouched.
fn rewrite(text: &str, scale: f64, lfp_soc0: f64, lead_soc0: f64) -> String {
    let mut section = String::new();
    let mut pack_name = String::new();
    let mut out = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            section = trimmed.to_string();
            pack_name.clear();
        }
        if section == "[[pack]]" {
            if let Some(v) = trimmed.strip_prefix("name = ") {
                pack_name = v.trim_matches('"').to_string();
            }
        }
        if section == "[irradiance]" && trimmed.starts_with("scale =") {
            out.push(format!("scale = {scale}"));
        } else if section == "[[pack]]" && pack_name == "lfp" && trimmed.starts_with("soc0 =") {
            out.push(format!("soc0 = {lfp_soc0}"));
        } else if section == "[[pack]]" && pack_name == "lead_acid" && trimmed.starts_with("soc0 =") {
            out.push(format!("soc0 = {lead_soc0}"));
        } else {
            out.push(line.to_string());
        }
    }
    out.join("\n") + "\n"
}
