use std::collections::BTreeSet;

use offgrid_core::pv::{enumerate_string_configs, validate_config, PvArrayConfig, PvModuleSpec, VoltageWindow};
use proptest::prelude::*;

fn brute_force(module: &PvModuleSpec, total: u32, window: &VoltageWindow) -> BTreeSet<(u32, u32)> {
    (1..=total)
        .filter(|s| total.is_multiple_of(*s))
        .filter_map(|s| {
            let c = PvArrayConfig::new(module.clone(), s, total / s).unwrap();
            validate_config(&c, window).is_ok().then_some((s, total / s))
        })
        .collect()
}

fn planned(module: &PvModuleSpec, total: u32, window: &VoltageWindow) -> BTreeSet<(u32, u32)> {
    let configs = enumerate_string_configs(module, total, window);
    let set: BTreeSet<_> = configs.iter().map(|c| (c.series, c.parallel)).collect();
    assert_eq!(set.len(), configs.len(), "duplicates in planner output");
    set
}

fn hybrid_window() -> VoltageWindow {
    VoltageWindow::new(90.0, 230.0, 250.0).unwrap()
}

#[test]
fn installed_arrays() {
    let m75 = PvModuleSpec::new("75W", 75.0, 17.0, 21.7).unwrap();
    let m80 = PvModuleSpec::new("80W", 80.0, 17.3, 21.6).unwrap();
    let w = hybrid_window();
    assert_eq!(planned(&m75, 28, &w), BTreeSet::from([(7, 4)]));
    assert_eq!(planned(&m80, 40, &w), BTreeSet::from([(10, 4), (8, 5)]));
    assert!(planned(&m75, 29, &w).is_empty());
    assert!(planned(&m75, 0, &w).is_empty());
}

#[test]
fn output_is_highest_series_first() {
    let m = PvModuleSpec::new("80W", 80.0, 17.3, 21.6).unwrap();
    let series: Vec<u32> = enumerate_string_configs(&m, 40, &hybrid_window()).iter().map(|c| c.series).collect();
    assert_eq!(series, vec![10, 8]);
}

#[test]
fn boundary_voltages_are_inclusive_for_operation_and_strict_for_open_circuit() {
    let w = VoltageWindow::new(90.0, 230.0, 250.0).unwrap();
    // 5s exactly reaches op_min; 10s lands exactly on op_max
    let m = PvModuleSpec::new("edge", 100.0, 18.0, 23.0).unwrap();
    assert!(planned(&m, 5, &w).contains(&(5, 1)));
    let m = PvModuleSpec::new("edge", 100.0, 23.0, 24.0).unwrap();
    assert!(planned(&m, 10, &w).contains(&(10, 1)));
    // 10s with Voc 25 V gives exactly oc_max, which is rejected
    let m = PvModuleSpec::new("edge", 100.0, 20.0, 25.0).unwrap();
    assert!(!planned(&m, 10, &w).contains(&(10, 1)));
}

fn module_strategy() -> impl Strategy<Value = PvModuleSpec> {
    (5.0f64..600.0, 2.0f64..60.0, 1.01f64..1.5)
        .prop_map(|(p, vmp, ratio)| PvModuleSpec::new("m", p, vmp, vmp * ratio).unwrap())
}

fn window_strategy() -> impl Strategy<Value = VoltageWindow> {
    (5.0f64..200.0, 1.05f64..4.0, 1.0f64..1.5).prop_map(|(lo, span, oc)| {
        let op_max = lo * span;
        VoltageWindow::new(lo, op_max, op_max * oc + 0.1).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_brute_force_for_every_total(module in module_strategy(), window in prop_oneof![Just(hybrid_window()), window_strategy()]) {
        for total in 1..=200 {
            prop_assert_eq!(planned(&module, total, &window), brute_force(&module, total, &window), "total {}", total);
        }
    }
}
