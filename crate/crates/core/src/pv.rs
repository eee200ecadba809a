//! PV modules, arrays and series/parallel string planning.
//!
//! The electrical model is deliberately flat: a string's operating voltage is
//! `series * v_mp`, its open-circuit voltage `series * v_oc`, with no
//! temperature or irradiance dependence of either.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PvError {
    #[error("module power_peak must be positive (got {0} W)")]
    NonPositivePower(f64),
    #[error("module voltages must satisfy 0 < v_mp < v_oc (got v_mp={v_mp}, v_oc={v_oc})")]
    BadModuleVoltages { v_mp: f64, v_oc: f64 },
    #[error("voltage window must satisfy 0 < op_min < op_max < oc_max (got {op_min}/{op_max}/{oc_max})")]
    BadWindow { op_min: f64, op_max: f64, oc_max: f64 },
    #[error("array needs at least one module in series and in parallel (got {series}s{parallel}p)")]
    EmptyArray { series: u32, parallel: u32 },
}

impl PvError {
    pub fn name(&self) -> &'static str {
        match self {
            PvError::NonPositivePower(_) => "NonPositivePower",
            PvError::BadModuleVoltages { .. } => "BadModuleVoltages",
            PvError::BadWindow { .. } => "BadWindow",
            PvError::EmptyArray { .. } => "EmptyArray",
        }
    }
}

/// Nameplate data of one PV module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModule", into = "RawModule")]
pub struct PvModuleSpec {
    name: String,
    power_peak: f64,
    v_mp: f64,
    v_oc: f64,
}

#[derive(Serialize, Deserialize)]
struct RawModule {
    name: String,
    power_peak_w: f64,
    v_mp: f64,
    v_oc: f64,
}

impl TryFrom<RawModule> for PvModuleSpec {
    type Error = PvError;
    fn try_from(raw: RawModule) -> Result<Self, PvError> {
        PvModuleSpec::new(raw.name, raw.power_peak_w, raw.v_mp, raw.v_oc)
    }
}

impl From<PvModuleSpec> for RawModule {
    fn from(m: PvModuleSpec) -> Self {
        RawModule { name: m.name, power_peak_w: m.power_peak, v_mp: m.v_mp, v_oc: m.v_oc }
    }
}

impl PvModuleSpec {
    pub fn new(name: impl Into<String>, power_peak: f64, v_mp: f64, v_oc: f64) -> Result<Self, PvError> {
        if !(power_peak > 0.0) {
            return Err(PvError::NonPositivePower(power_peak));
        }
        if !(v_mp > 0.0 && v_mp < v_oc) || !v_oc.is_finite() {
            return Err(PvError::BadModuleVoltages { v_mp, v_oc });
        }
        Ok(Self { name: name.into(), power_peak, v_mp, v_oc })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn power_peak(&self) -> f64 {
        self.power_peak
    }

    pub fn v_mp(&self) -> f64 {
        self.v_mp
    }

    pub fn v_oc(&self) -> f64 {
        self.v_oc
    }
}

/// Inverter DC input window: operating range `[op_min, op_max]` (inclusive)
/// and open-circuit ceiling `oc_max` (strict).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWindow", into = "RawWindow")]
pub struct VoltageWindow {
    op_min: f64,
    op_max: f64,
    oc_max: f64,
}

#[derive(Serialize, Deserialize)]
struct RawWindow {
    op_min: f64,
    op_max: f64,
    oc_max: f64,
}

impl TryFrom<RawWindow> for VoltageWindow {
    type Error = PvError;
    fn try_from(raw: RawWindow) -> Result<Self, PvError> {
        VoltageWindow::new(raw.op_min, raw.op_max, raw.oc_max)
    }
}

impl From<VoltageWindow> for RawWindow {
    fn from(w: VoltageWindow) -> Self {
        RawWindow { op_min: w.op_min, op_max: w.op_max, oc_max: w.oc_max }
    }
}

impl VoltageWindow {
    pub fn new(op_min: f64, op_max: f64, oc_max: f64) -> Result<Self, PvError> {
        if !(op_min > 0.0 && op_min < op_max && op_max < oc_max) || !oc_max.is_finite() {
            return Err(PvError::BadWindow { op_min, op_max, oc_max });
        }
        Ok(Self { op_min, op_max, oc_max })
    }

    pub fn op_min(&self) -> f64 {
        self.op_min
    }

    pub fn op_max(&self) -> f64 {
        self.op_max
    }

    pub fn oc_max(&self) -> f64 {
        self.oc_max
    }

    fn operating_ok_low(&self, v: f64) -> bool {
        v >= self.op_min
    }

    fn operating_ok_high(&self, v: f64) -> bool {
        v <= self.op_max
    }

    fn open_circuit_ok(&self, v: f64) -> bool {
        v < self.oc_max
    }
}

/// A series x parallel arrangement of identical modules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvArrayConfig {
    pub series: u32,
    pub parallel: u32,
    pub module: PvModuleSpec,
}

impl PvArrayConfig {
    pub fn new(module: PvModuleSpec, series: u32, parallel: u32) -> Result<Self, PvError> {
        if series == 0 || parallel == 0 {
            return Err(PvError::EmptyArray { series, parallel });
        }
        Ok(Self { series, parallel, module })
    }

    pub fn module_count(&self) -> u32 {
        self.series * self.parallel
    }

    pub fn operating_voltage(&self) -> f64 {
        f64::from(self.series) * self.module.v_mp
    }

    pub fn open_circuit_voltage(&self) -> f64 {
        f64::from(self.series) * self.module.v_oc
    }

    pub fn power_peak(&self) -> f64 {
        f64::from(self.module_count()) * self.module.power_peak
    }
}

impl fmt::Display for PvArrayConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s{}p", self.series, self.parallel)
    }
}

/// One failed window condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowViolation {
    OpMinNotReached,
    OpMaxExceeded,
    OcMaxExceeded,
}

impl WindowViolation {
    pub fn as_str(&self) -> &'static str {
        match self {
            WindowViolation::OpMinNotReached => "op_min not reached",
            WindowViolation::OpMaxExceeded => "op_max exceeded",
            WindowViolation::OcMaxExceeded => "oc_max exceeded",
        }
    }
}

impl fmt::Display for WindowViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Checks an array against an inverter input window. Operating bounds are
/// inclusive, the open-circuit bound is strict.
pub fn validate_config(config: &PvArrayConfig, window: &VoltageWindow) -> Result<(), Vec<WindowViolation>> {
    let v_op = config.operating_voltage();
    let v_oc = config.open_circuit_voltage();
    let mut violations = Vec::new();
    if !window.operating_ok_low(v_op) {
        violations.push(WindowViolation::OpMinNotReached);
    }
    if !window.operating_ok_high(v_op) {
        violations.push(WindowViolation::OpMaxExceeded);
    }
    if !window.open_circuit_ok(v_oc) {
        violations.push(WindowViolation::OcMaxExceeded);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// All exact factorisations `series * parallel == total_modules` that fit the
/// window, highest series count first.
///
/// The feasible series range is derived from the window first, so only
/// divisors inside it are visited.
pub fn enumerate_string_configs(
    module: &PvModuleSpec,
    total_modules: u32,
    window: &VoltageWindow,
) -> Vec<PvArrayConfig> {
    if total_modules == 0 {
        return Vec::new();
    }
    let Some((lo, hi)) = feasible_series_range(module, total_modules, window) else {
        return Vec::new();
    };
    (lo..=hi)
        .rev()
        .filter(|s| total_modules.is_multiple_of(*s))
        .map(|s| PvArrayConfig { series: s, parallel: total_modules / s, module: module.clone() })
        .collect()
}

/// Inclusive `[lo, hi]` range of series counts meeting all three window
/// conditions, capped at `max_series`.
fn feasible_series_range(module: &PvModuleSpec, max_series: u32, window: &VoltageWindow) -> Option<(u32, u32)> {
    let v_op = |s: u32| f64::from(s) * module.v_mp;
    let v_oc = |s: u32| f64::from(s) * module.v_oc;
    let clamp = |x: f64| x.clamp(1.0, f64::from(max_series)) as u32;

    // Initial guesses from division, then nudged until the product
    // comparisons (the ones validate_config makes) agree exactly.
    let mut lo = clamp((window.op_min / module.v_mp).ceil());
    while lo > 1 && window.operating_ok_low(v_op(lo - 1)) {
        lo -= 1;
    }
    while lo <= max_series && !window.operating_ok_low(v_op(lo)) {
        lo += 1;
    }

    let mut hi = clamp((window.op_max / module.v_mp).floor().min((window.oc_max / module.v_oc).ceil()));
    while hi < max_series && window.operating_ok_high(v_op(hi + 1)) && window.open_circuit_ok(v_oc(hi + 1)) {
        hi += 1;
    }
    while hi >= 1 && !(window.operating_ok_high(v_op(hi)) && window.open_circuit_ok(v_oc(hi))) {
        hi -= 1;
    }

    (lo <= hi && hi >= 1).then_some((lo, hi))
}

/// DC output of an array at a fraction of nameplate irradiance.
///
/// Panics if `irradiance_fraction` is outside `[0, 1]` or `derate` outside
/// `(0, 1]`.
pub fn array_power(config: &PvArrayConfig, irradiance_fraction: f64, derate: f64) -> f64 {
    assert!((0.0..=1.0).contains(&irradiance_fraction), "irradiance fraction {irradiance_fraction} outside [0, 1]");
    assert!(derate > 0.0 && derate <= 1.0, "derate {derate} outside (0, 1]");
    config.power_peak() * irradiance_fraction * derate
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window() -> VoltageWindow {
        VoltageWindow::new(90.0, 230.0, 250.0).unwrap()
    }

    fn m75() -> PvModuleSpec {
        PvModuleSpec::new("generic-75", 75.0, 17.0, 21.7).unwrap()
    }

    fn pairs(configs: &[PvArrayConfig]) -> Vec<(u32, u32)> {
        configs.iter().map(|c| (c.series, c.parallel)).collect()
    }

    #[test]
    fn twenty_eight_modules() {
        let got = enumerate_string_configs(&m75(), 28, &window());
        assert_eq!(pairs(&got), vec![(7, 4)]);
    }

    #[test]
    fn forty_modules() {
        let m80 = PvModuleSpec::new("generic-80", 80.0, 17.3, 21.6).unwrap();
        let got = enumerate_string_configs(&m80, 40, &window());
        assert_eq!(pairs(&got), vec![(10, 4), (8, 5)]);
    }

    #[test]
    fn prime_count_has_no_layout() {
        assert!(enumerate_string_configs(&m75(), 29, &window()).is_empty());
    }

    #[test]
    fn validate_named_violations() {
        let ok = PvArrayConfig::new(m75(), 7, 4).unwrap();
        assert_eq!(validate_config(&ok, &window()), Ok(()));

        let high = PvArrayConfig::new(m75(), 14, 2).unwrap();
        // 14 x 21.7 V = 303.8 V also breaks the open-circuit limit
        assert_eq!(
            validate_config(&high, &window()),
            Err(vec![WindowViolation::OpMaxExceeded, WindowViolation::OcMaxExceeded])
        );
        assert_eq!(WindowViolation::OpMaxExceeded.to_string(), "op_max exceeded");

        let low = PvArrayConfig::new(m75(), 4, 7).unwrap();
        assert_eq!(validate_config(&low, &window()), Err(vec![WindowViolation::OpMinNotReached]));
    }

    #[test]
    fn bounds_inclusive_and_strict() {
        let at_max = PvModuleSpec::new("edge", 100.0, 23.0, 24.0).unwrap();
        let cfg = PvArrayConfig::new(at_max, 10, 1).unwrap();
        assert_eq!(cfg.operating_voltage(), 230.0);
        assert_eq!(validate_config(&cfg, &window()), Ok(()));

        let oc_edge = PvModuleSpec::new("edge", 100.0, 20.0, 25.0).unwrap();
        let cfg = PvArrayConfig::new(oc_edge, 10, 1).unwrap();
        assert_eq!(validate_config(&cfg, &window()), Err(vec![WindowViolation::OcMaxExceeded]));
    }

    #[test]
    fn power_examples() {
        let a = PvArrayConfig::new(m75(), 7, 4).unwrap();
        assert_eq!(array_power(&a, 1.0, 1.0), 2100.0);
        assert_eq!(array_power(&a, 0.0, 0.9), 0.0);
        let m80 = PvModuleSpec::new("generic-80", 80.0, 17.3, 21.6).unwrap();
        let b = PvArrayConfig::new(m80, 8, 5).unwrap();
        assert!((array_power(&b, 0.5, 0.9) - 1440.0).abs() < 1e-9);
    }

    #[test]
    #[should_panic]
    fn irradiance_above_one_panics() {
        let a = PvArrayConfig::new(m75(), 7, 4).unwrap();
        array_power(&a, 1.01, 1.0);
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(PvModuleSpec::new("x", 0.0, 17.0, 21.0).is_err());
        assert!(PvModuleSpec::new("x", 75.0, 22.0, 21.0).is_err());
        assert!(VoltageWindow::new(90.0, 80.0, 250.0).is_err());
        assert!(VoltageWindow::new(90.0, 230.0, 230.0).is_err());
        assert!(PvArrayConfig::new(m75(), 0, 4).is_err());
    }

    #[test]
    fn module_roundtrips_through_toml() {
        let text = "name = \"x\"\npower_peak_w = 75.0\nv_mp = 17.0\nv_oc = 21.7\n";
        let m: PvModuleSpec = toml::from_str(text).unwrap();
        assert_eq!(m, m75().clone_with_name("x"));
        let bad = "name = \"x\"\npower_peak_w = 75.0\nv_mp = 30.0\nv_oc = 21.7\n";
        assert!(toml::from_str::<PvModuleSpec>(bad).is_err());
    }

    impl PvModuleSpec {
        fn clone_with_name(&self, name: &str) -> Self {
            Self { name: name.to_string(), ..self.clone() }
        }
    }
}
