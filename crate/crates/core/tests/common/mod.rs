//! Random scenarios and power-balance checks shared by integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::Duration;
use offgrid_core::battery::{BusPack, HybridBus};
use offgrid_core::simulation::{preset, Fault, FaultKind, Scenario, TracePoint};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative error with a floor of 1 unit (W or Wh) in the denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// A 24 h scenario derived from a preset with randomised weather, load,
/// initial charge, generator and faults.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = *["pre-2021", "2021-default", "future-plan"].choose(&mut rng).unwrap();
    let mut s = preset(base).unwrap();
    s.dt_s = *[30u64, 60, 120, 300, 900].choose(&mut rng).unwrap();
    s.duration_s = 86_400;
    s.start_time += Duration::minutes(rng.gen_range(0..24 * 4) * 15);
    s.irradiance_scale = rng.gen_range(0.0..=1.0);
    s.pv_derate = rng.gen_range(0.5..=1.0);
    s.load_scale = rng.gen_range(0.0..12.0);
    s.discharge_floor_pct = rng.gen_range(0.0..50.0);
    s.generator.available = rng.gen_bool(0.4);
    s.generator.rating_w = rng.gen_range(0.0..6000.0);
    let weights: Vec<f64> = s.channels.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
    let total: f64 = weights.iter().sum::<f64>().max(1e-9);
    for (c, w) in s.channels.iter_mut().zip(weights) {
        c.load_share = w / total;
    }

    let v_cap = s.bus.v_cap();
    let mut packs = s.bus.packs().iter().map(|p| {
        BusPack::new(p.name.clone(), p.pack, rng.gen_range(0.0..=100.0)).with_efficiency(rng.gen_range(0.7..=1.0))
    });
    let mut bus = HybridBus::single(packs.next().unwrap());
    for p in packs.collect::<Vec<_>>() {
        bus = bus.connect(p, f64::INFINITY).unwrap();
    }
    s.bus = bus.with_v_cap(v_cap);

    s.faults.clear();
    let names: Vec<String> = s.bus.packs().iter().map(|p| p.name.clone()).collect();
    for _ in 0..rng.gen_range(0..3) {
        let at = s.start_time + Duration::seconds(rng.gen_range(0..86_400));
        let kind = match rng.gen_range(0..3) {
            0 => FaultKind::InverterFailure { channel: rng.gen_range(1..=s.channels.len()) },
            1 => FaultKind::ChargerFailure { channel: rng.gen_range(1..=s.channels.len()) },
            _ => FaultKind::PackFailure { pack: names.choose(&mut rng).unwrap().clone() },
        };
        s.faults.push(Fault { at, kind });
    }
    s
}

/// Worst relative residual of the per-step and whole-run balance
/// identities, or a description of the first hard violation.
pub fn check_balance(s: &Scenario, trace: &[TracePoint]) -> Result<f64, String> {
    let dt_h = s.dt_s as f64 / 3600.0;
    let mut worst: f64 = 0.0;
    let mut stored: BTreeMap<String, (f64, f64)> =
        s.bus.packs().iter().map(|p| (p.name.clone(), (p.state.soc, 0.0))).collect();
    let (mut pv_in, mut pv_out, mut load_in, mut load_out) = (0.0, 0.0, 0.0, 0.0);

    for p in trace {
        if !(0.0..=100.0).contains(&p.soc) {
            return Err(format!("{}: bus soc {}", p.time, p.soc));
        }
        for c in &p.channels {
            let f = &c.flows;
            let parts = [f.pv_to_load, f.pv_to_batt, f.batt_to_load, f.gen_to_load, f.curtailed, f.unserved];
            if parts.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                return Err(format!("{}: negative or non-finite flow {f:?}", p.time));
            }
            worst = worst.max(rel_err(f.pv_total(), c.pv_available));
            worst = worst.max(rel_err(f.served() + f.unserved, c.load));
            pv_in += c.pv_available;
            pv_out += f.pv_total();
            load_in += c.load;
            load_out += f.served() + f.unserved;
        }
        let pack_power: f64 = p.packs.iter().map(|k| k.power).sum();
        worst = worst.max(rel_err(pack_power, p.bus_power));

        for k in &p.packs {
            if !(0.0..=100.0).contains(&k.soc) {
                return Err(format!("{}: pack {} soc {}", p.time, k.name, k.soc));
            }
            let (prev_soc, acc) = stored.get_mut(&k.name).ok_or_else(|| format!("unknown pack {}", k.name))?;
            let eta = if k.power > 0.0 { k.efficiency } else { 1.0 / k.efficiency };
            let expected = k.power * dt_h * eta;
            let actual = (k.soc - *prev_soc) / 100.0 * k.usable_energy_wh;
            worst = worst.max(rel_err(actual, expected));
            *acc += expected;
            *prev_soc = k.soc;
        }
    }
    worst = worst.max(rel_err(pv_in * dt_h, pv_out * dt_h));
    worst = worst.max(rel_err(load_in * dt_h, load_out * dt_h));
    for p in s.bus.packs() {
        let (last_soc, acc) = stored[&p.name];
        let delta = (last_soc - p.state.soc) / 100.0 * p.pack.usable_energy();
        worst = worst.max(rel_err(delta, acc));
    }
    Ok(worst)
}
