//! Aggregated type-3 wind plants seen from the grid as current-controlled
//! power injections at unity power factor.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BASE_MVA, C64};

/// Below this PCC voltage the plant rides through at its current limit.
pub const RIDE_THROUGH_V: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindPlant {
    pub name: String,
    pub bus: u32,
    pub rating_mva: f64,
    /// Current limit, pu of rating.
    #[serde(default = "default_limit")]
    pub current_limit: f64,
    /// Power-tracking lag, s.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_limit() -> f64 {
    1.1
}

fn default_tau() -> f64 {
    0.05
}

impl WindPlant {
    pub fn new(name: &str, bus: u32, rating_mva: f64) -> Self {
        Self {
            name: name.to_string(),
            bus,
            rating_mva,
            current_limit: default_limit(),
            tau: default_tau(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rating_mva > 0.0) || !(self.tau > 0.0) || !(self.current_limit > 0.0) {
            return Err(Error::Domain(format!("wind plant {}: rating, tau and limit must be positive", self.name)));
        }
        Ok(())
    }

    /// Rate of change of the tracked power (pu of rating).
    pub fn derivative(&self, p: f64, available: f64) -> f64 {
        (available - p) / self.tau
    }

    /// Network current (system base) for tracked power `p` at PCC voltage `v`.
    pub fn current(&self, p: f64, v: C64) -> WindInjection {
        let scale = self.rating_mva / BASE_MVA;
        let i_max = self.current_limit * scale;
        let vm = v.norm();
        let s = p * scale;
        let mut current = if vm > 0.0 { C64::new(s, 0.0) / v.conj() } else { C64::new(0.0, 0.0) };
        let mut limited = false;
        if current.norm() > i_max || vm < RIDE_THROUGH_V {
            let dir = if vm > 0.0 { v / vm } else { C64::new(1.0, 0.0) };
            let mag = current.norm().min(i_max);
            current = dir * mag;
            limited = true;
        }
        WindInjection {
            current,
            limited,
            ride_through: vm < RIDE_THROUGH_V,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindInjection {
    pub current: C64,
    pub limited: bool,
    pub ride_through: bool,
}

/// Advances the tracked power by `dt` (exact first-order update) and
/// returns it with the resulting injection.
pub fn wind_injection_step(plant: &WindPlant, p: f64, available: f64, v: C64, dt: f64) -> (f64, WindInjection) {
    let a = (-dt / plant.tau).exp();
    let next = available + (p - available) * a;
    (next, plant.current(next, v))
}

/// Available power at 1 s resolution, pu of rating.
#[derive(Debug, Clone, PartialEq)]
pub struct WindProfile {
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WindRow {
    t_s: u64,
    p_pu: f64,
}

impl WindProfile {
    pub fn constant(p: f64) -> Self {
        Self { values: vec![p] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::schema("p_pu", "empty wind profile"));
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::schema("p_pu", format!("value {v} outside [0, 1]")));
        }
        Ok(())
    }

    /// Linear interpolation between the 1 s samples, held past the end.
    pub fn at(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        let k = t.floor() as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().expect("validated nonempty");
        }
        let w = t - k as f64;
        self.values[k] + (self.values[k + 1] - self.values[k]) * w
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path.as_ref())?;
        let mut values = vec![];
        for (k, row) in rdr.deserialize().enumerate() {
            let row: WindRow = row?;
            if row.t_s != k as u64 {
                return Err(Error::schema("t_s", format!("expected {k}, found {}", row.t_s)));
            }
            values.push(row.p_pu);
        }
        let p = Self { values };
        p.validate()?;
        Ok(p)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        for (k, v) in self.values.iter().enumerate() {
            w.serialize(WindRow { t_s: k as u64, p_pu: *v })?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }
}

/// Resamples a 1 min series to 1 s by linear interpolation plus seeded
/// zero-mean Gaussian noise of standard deviation `sigma`, clamped to [0, 1].
pub fn resample_profile(minute_series: &[f64], sigma: f64, seed: u64) -> Result<WindProfile> {
    if minute_series.is_empty() {
        return Err(Error::Domain("empty minute series".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Domain("sigma must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    let n = (minute_series.len() - 1) * 60 + 1;
    let values = (0..n)
        .map(|s| {
            let k = s / 60;
            let w = (s % 60) as f64 / 60.0;
            let base = if k + 1 < minute_series.len() {
                minute_series[k] + (minute_series[k + 1] - minute_series[k]) * w
            } else {
                minute_series[k]
            };
            let e = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (base + e).clamp(0.0, 1.0)
        })
        .collect();
    Ok(WindProfile { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plant() -> WindPlant {
        WindPlant::new("WP1", 39, 1500.0)
    }

    #[test]
    fn steady_tracking_unity_power_factor() {
        let wp = plant();
        let mut p = 0.8;
        let mut inj = wp.current(p, C64::new(1.0, 0.0));
        for _ in 0..100 {
            (p, inj) = wind_injection_step(&wp, p, 0.8, C64::new(1.0, 0.0), 1e-3);
        }
        let s = C64::new(1.0, 0.0) * inj.current.conj();
        assert!((s.re - 0.8 * 15.0).abs() < 1e-12);
        assert!(s.im.abs() < 1e-12);
    }

    #[test]
    fn current_at_reduced_voltage() {
        let wp = plant();
        let v = C64::from_polar(0.9, 0.3);
        let inj = wp.current(0.9, v);
        // 0.9 pu of rating at 0.9 pu voltage is 1.0 pu current on the rating.
        assert!((inj.current.norm() / 15.0 - 1.0).abs() < 1e-12);
        assert!(!inj.limited);
        assert!(((v * inj.current.conj()).im).abs() < 1e-12);
    }

    #[test]
    fn step_follows_first_order_lag() {
        let wp = plant();
        let mut p = 0.5;
        for k in 1..=200 {
            (p, _) = wind_injection_step(&wp, p, 0.6, C64::new(1.0, 0.0), 1e-3);
            let t = k as f64 * 1e-3;
            assert!((p - (0.6 - 0.1 * (-t / 0.05).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn ride_through_flagged() {
        let inj = plant().current(0.8, C64::new(0.05, 0.0));
        assert!(inj.ride_through && inj.limited);
        assert!(inj.current.norm() <= 1.1 * 15.0 + 1e-12);
    }

    proptest! {
        #[test]
        fn apparent_power_never_exceeds_limit(p in 0.0f64..1.0, vm in 0.01f64..1.5, ang in -3.0f64..3.0) {
            let wp = plant();
            let v = C64::from_polar(vm, ang);
            let inj = wp.current(p, v);
            prop_assert!(inj.current.norm() <= 1.1 * 15.0 * (1.0 + 1e-12));
            prop_assert!((v * inj.current.conj()).norm() <= 1.1 * 15.0 * vm * (1.0 + 1e-12));
            prop_assert!((v * inj.current.conj()).im.abs() < 1e-9);
        }
    }

    #[test]
    fn resample_examples() {
        let flat = resample_profile(&[0.7, 0.7, 0.7], 0.0, 1).unwrap();
        assert_eq!(flat.values.len(), 121);
        assert!(flat.values.iter().all(|v| *v == 0.7));
        let mid = resample_profile(&[0.4, 0.6], 0.0, 1).unwrap();
        assert!((mid.values[30] - 0.5).abs() < 1e-15);
        assert!((mid.at(30.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn resample_noise_statistics() {
        let minutes: Vec<f64> = (0..200).map(|k| 0.5 + 0.1 * ((k as f64) * 0.3).sin()).collect();
        let sigma = 0.005;
        let a = resample_profile(&minutes, sigma, 42).unwrap();
        let b = resample_profile(&minutes, sigma, 42).unwrap();
        assert_eq!(a, b);
        let clean = resample_profile(&minutes, 0.0, 0).unwrap();
        let resid: Vec<f64> = a.values.iter().zip(&clean.values).map(|(x, y)| x - y).collect();
        let n = resid.len() as f64;
        let mean = resid.iter().sum::<f64>() / n;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.2, "variance ratio {}", var / (sigma * sigma));
    }

    #[test]
    fn csv_round_trip() {
        let p = resample_profile(&[0.2, 0.9, 0.4], 0.01, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        p.write_csv(&path).unwrap();
        assert_eq!(WindProfile::read_csv(&path).unwrap(), p);
    }
}
