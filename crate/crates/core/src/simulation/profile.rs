//! Daily piecewise-linear profiles for irradiance and load.

use chrono::{NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use super::ScenarioError;

/// `(hour of day, value)` breakpoints, linearly interpolated and repeated
/// every 24 h. Breakpoints must start at hour 0, end at hour 24 and be
/// strictly increasing in hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct DailyProfile {
    points: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for DailyProfile {
    type Error = ScenarioError;
    fn try_from(points: Vec<(f64, f64)>) -> Result<Self, ScenarioError> {
        DailyProfile::new(points)
    }
}

impl From<DailyProfile> for Vec<(f64, f64)> {
    fn from(p: DailyProfile) -> Self {
        p.points
    }
}

impl DailyProfile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, ScenarioError> {
        let bad = |why: &str| ScenarioError::Invalid(format!("profile {why}"));
        if points.len() < 2 {
            return Err(bad("needs at least two breakpoints"));
        }
        if points[0].0 != 0.0 || points[points.len() - 1].0 != 24.0 {
            return Err(bad("must span hour 0 to hour 24"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(bad("hours must be strictly increasing"));
        }
        if points.iter().any(|&(_, v)| !v.is_finite() || v < 0.0) {
            return Err(bad("values must be finite and non-negative"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn at_hour(&self, hour: f64) -> f64 {
        let h = hour.rem_euclid(24.0);
        for w in self.points.windows(2) {
            let (h0, v0) = w[0];
            let (h1, v1) = w[1];
            if h <= h1 {
                return v0 + (v1 - v0) * (h - h0) / (h1 - h0);
            }
        }
        self.points[self.points.len() - 1].1
    }

    pub fn at(&self, t: NaiveTime) -> f64 {
        self.at_hour(hour_of_day(t))
    }

    pub fn max(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { points: self.points.iter().map(|&(h, v)| (h, v * factor)).collect() }
    }
}

pub fn hour_of_day(t: NaiveTime) -> f64 {
    f64::from(t.num_seconds_from_midnight()) / 3600.0
}

/// Normalised clear-day irradiance: dark before 06:00 and from 19:00, a
/// steep morning ramp that flattens at 09:15 and a single maximum of 1.0 at
/// noon.
const DEFAULT_IRRADIANCE: [(f64, f64); 17] = [
    (0.0, 0.0),
    (6.0, 0.0),
    (7.0, 0.30),
    (8.0, 0.60),
    (9.0, 0.80),
    (9.25, 0.85),
    (10.0, 0.88),
    (11.0, 0.94),
    (12.0, 1.0),
    (13.0, 0.95),
    (14.0, 0.82),
    (15.0, 0.62),
    (16.0, 0.36),
    (17.0, 0.12),
    (18.0, 0.03),
    (19.0, 0.0),
    (24.0, 0.0),
];

/// Cabin demand in watts: 150 W overnight base, a breakfast bump, a
/// mid-morning bump, and the evening ramp from 17:00 to a 620 W peak at
/// 20:00 that declines through the night.
const DEFAULT_LOAD: [(f64, f64); 26] = [
    (0.0, 260.0),
    (1.0, 210.0),
    (2.0, 175.0),
    (3.0, 155.0),
    (4.0, 150.0),
    (5.0, 150.0),
    (6.0, 170.0),
    (7.0, 260.0),
    (8.0, 230.0),
    (9.0, 200.0),
    (9.25, 200.0),
    (10.0, 480.0),
    (11.0, 380.0),
    (12.0, 330.0),
    (13.0, 280.0),
    (14.0, 250.0),
    (15.0, 240.0),
    (16.0, 250.0),
    (17.0, 290.0),
    (18.0, 420.0),
    (19.0, 540.0),
    (20.0, 620.0),
    (21.0, 560.0),
    (22.0, 450.0),
    (23.0, 340.0),
    (24.0, 260.0),
];

pub fn default_irradiance() -> DailyProfile {
    DailyProfile { points: DEFAULT_IRRADIANCE.to_vec() }
}

pub fn default_load() -> DailyProfile {
    DailyProfile { points: DEFAULT_LOAD.to_vec() }
}

/// Default normalised irradiance at time of day `t`, in `[0, 1]`.
pub fn irradiance_profile(t: NaiveTime) -> f64 {
    default_irradiance().at(t)
}

/// Default total cabin load at time of day `t`, in watts.
pub fn load_profile(t: NaiveTime) -> f64 {
    default_load().at(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hm(h: u32, m: u32) -> NaiveTime {
        NaiveTime::from_hms_opt(h, m, 0).unwrap()
    }

    #[test]
    fn irradiance_examples() {
        assert_eq!(irradiance_profile(hm(3, 0)), 0.0);
        assert_eq!(irradiance_profile(hm(19, 30)), 0.0);
        assert_eq!(irradiance_profile(hm(12, 0)), 1.0);
        assert_eq!(irradiance_profile(hm(6, 0)), 0.0);
    }

    #[test]
    fn irradiance_single_maximum_at_noon() {
        let p = default_irradiance();
        let mut best = (0u32, 0.0);
        for minute in 0..1440 {
            let v = p.at_hour(f64::from(minute) / 60.0);
            assert!((0.0..=1.0).contains(&v));
            if v > best.1 {
                best = (minute, v);
            }
        }
        assert_eq!(best, (720, 1.0));
        // rises monotonically to noon, falls after
        for minute in 360..720 {
            assert!(p.at_hour(f64::from(minute + 1) / 60.0) > p.at_hour(f64::from(minute) / 60.0));
        }
        for minute in 720..1140 {
            assert!(p.at_hour(f64::from(minute + 1) / 60.0) < p.at_hour(f64::from(minute) / 60.0));
        }
    }

    #[test]
    fn load_examples() {
        assert_eq!(load_profile(hm(20, 0)), 620.0);
        assert!(load_profile(hm(14, 0)) < 620.0);
        assert!(load_profile(hm(3, 0)) >= 150.0);
        assert_eq!(default_load().max(), 620.0);
        let peak_minute = (0..1440)
            .max_by(|a, b| {
                let pa = default_load().at_hour(f64::from(*a) / 60.0);
                let pb = default_load().at_hour(f64::from(*b) / 60.0);
                pa.partial_cmp(&pb).unwrap()
            })
            .unwrap();
        assert_eq!(peak_minute, 20 * 60);
    }

    #[test]
    fn bad_tables_rejected() {
        assert!(DailyProfile::new(vec![(0.0, 1.0)]).is_err());
        assert!(DailyProfile::new(vec![(0.0, 1.0), (12.0, 1.0)]).is_err());
        assert!(DailyProfile::new(vec![(0.0, 1.0), (12.0, 1.0), (12.0, 2.0), (24.0, 0.0)]).is_err());
        assert!(DailyProfile::new(vec![(0.0, -1.0), (24.0, 0.0)]).is_err());
        assert!(DailyProfile::new(vec![(0.0, 1.0), (24.0, 3.0)]).is_ok());
    }
}
