//! Voltage- and frequency-dependent loads (EPRI LOADSYN form) with the
//! buffered frequency and windowed RMS voltage measurements that feed them.
//!
//! `P = P0 (V/V0)^Kpv [1 + Kpf (f - f0)]`, `Q = Q0 (V/V0)^Kqv [1 + Kqf (f - f0)]`.

use std::collections::VecDeque;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples in a measurement window (1 ms each).
pub const WINDOW_SAMPLES: usize = 240;
/// Samples between reports; consecutive windows overlap by 220.
pub const REPORT_SAMPLES: usize = 20;
/// Profile resolution.
pub const PROFILE_STEP_MS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadParams {
    pub kpv: f64,
    pub kpf: f64,
    pub kqv: f64,
    pub kqf: f64,
    pub v0: f64,
    pub f0: f64,
    /// Below this voltage the load becomes a constant impedance.
    pub v_min: f64,
}

impl Default for LoadParams {
    fn default() -> Self {
        Self {
            kpv: 1.0,
            kpf: 1.0,
            kqv: 2.0,
            kqf: -1.0,
            v0: 1.0,
            f0: 1.0,
            v_min: 0.3,
        }
    }
}

impl LoadParams {
    pub fn constant_power() -> Self {
        Self {
            kpv: 0.0,
            kpf: 0.0,
            kqv: 0.0,
            kqf: 0.0,
            ..Self::default()
        }
    }

    /// All sensitivity coefficients zero: demand ignores the measurements.
    pub fn is_constant_power(&self) -> bool {
        [self.kpv, self.kpf, self.kqv, self.kqf].iter().all(|k| *k == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0) || !(self.f0 > 0.0) {
            return Err(Error::schema("load.v0", "V0 and f0 must be positive"));
        }
        if ![self.kpv, self.kpf, self.kqv, self.kqf].iter().all(|k| k.is_finite()) {
            return Err(Error::schema("load", "sensitivity coefficients must be finite"));
        }
        if !(self.v_min >= 0.0) {
            return Err(Error::schema("load.v_min", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Load demand at voltage `v` and frequency `f` (both pu).
pub fn load_power(p0: f64, q0: f64, v: f64, f: f64, p: &LoadParams) -> (f64, f64) {
    let df = f - p.f0;
    let eval = |vv: f64| {
        let x = vv / p.v0;
        (
            p0 * x.powf(p.kpv) * (1.0 + p.kpf * df),
            q0 * x.powf(p.kqv) * (1.0 + p.kqf * df),
        )
    };
    if v >= p.v_min {
        eval(v)
    } else {
        // Constant impedance continuation from the guard voltage.
        let (pg, qg) = eval(p.v_min.max(f64::MIN_POSITIVE));
        let r = (v.max(0.0) / p.v_min).powi(2);
        (pg * r, qg * r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reduce {
    Mean,
    Rms,
}

/// 240-sample sliding window sampled every 1 ms and reported every 20 ms.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedMeasurement {
    buf: VecDeque<f64>,
    since_report: usize,
    reported: f64,
    reduce: Reduce,
}

impl WindowedMeasurement {
    /// Frequency measurement: arithmetic mean of the buffer.
    pub fn frequency(initial: f64) -> Self {
        Self::new(initial, Reduce::Mean)
    }

    /// Voltage measurement: RMS over the window.
    pub fn rms(initial: f64) -> Self {
        Self::new(initial, Reduce::Rms)
    }

    fn new(initial: f64, reduce: Reduce) -> Self {
        Self {
            buf: std::iter::repeat(initial).take(WINDOW_SAMPLES).collect(),
            since_report: 0,
            reported: initial,
            reduce,
        }
    }

    pub fn reported(&self) -> f64 {
        self.reported
    }

    /// Pushes one 1 ms sample; returns the held report, refreshed on every
    /// 20th sample.
    pub fn push(&mut self, sample: f64) -> f64 {
        self.buf.pop_front();
        self.buf.push_back(sample);
        self.since_report += 1;
        if self.since_report == REPORT_SAMPLES {
            self.since_report = 0;
            let n = self.buf.len() as f64;
            self.reported = match self.reduce {
                Reduce::Mean => self.buf.iter().sum::<f64>() / n,
                Reduce::Rms => (self.buf.iter().map(|x| x * x).sum::<f64>() / n).sqrt(),
            };
        }
        self.reported
    }
}

pub fn frequency_measurement_step(meas: &mut WindowedMeasurement, raw: f64) -> f64 {
    meas.push(raw)
}

pub fn rms_measurement_step(meas: &mut WindowedMeasurement, magnitude: f64) -> f64 {
    meas.push(magnitude)
}

/// Demand profile sampled every 20 ms; values hold between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub t_ms: Vec<u64>,
    pub p_mw: Vec<f64>,
    pub q_mvar: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    t_ms: u64,
    #[serde(rename = "P0_MW")]
    p0_mw: f64,
    #[serde(rename = "Q0_MVar")]
    q0_mvar: f64,
}

impl LoadProfile {
    pub fn constant(p_mw: f64, q_mvar: f64) -> Self {
        Self {
            t_ms: vec![0],
            p_mw: vec![p_mw],
            q_mvar: vec![q_mvar],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_ms.is_empty() || self.t_ms.len() != self.p_mw.len() || self.t_ms.len() != self.q_mvar.len() {
            return Err(Error::schema("profile", "empty or ragged columns"));
        }
        for w in self.t_ms.windows(2) {
            if w[1] != w[0] + PROFILE_STEP_MS {
                return Err(Error::schema("t_ms", format!("expected 20 ms spacing at {} ms", w[0])));
            }
        }
        if self.p_mw.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::schema("P0_MW", "must be nonnegative"));
        }
        Ok(())
    }

    /// Value in force at `t` seconds (zero-order hold, clamped at both ends).
    pub fn at(&self, t: f64) -> (f64, f64) {
        let ms = (t * 1000.0 + 1e-9).floor().max(0.0) as u64;
        let k = ms.saturating_sub(self.t_ms[0]) / PROFILE_STEP_MS;
        let k = (k as usize).min(self.t_ms.len() - 1);
        (self.p_mw[k], self.q_mvar[k])
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut out = Self {
            t_ms: vec![],
            p_mw: vec![],
            q_mvar: vec![],
        };
        for row in rdr.deserialize() {
            let row: ProfileRow = row?;
            out.t_ms.push(row.t_ms);
            out.p_mw.push(row.p0_mw);
            out.q_mvar.push(row.q0_mvar);
        }
        out.validate()?;
        Ok(out)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        for i in 0..self.t_ms.len() {
            w.serialize(ProfileRow {
                t_ms: self.t_ms[i],
                p0_mw: self.p_mw[i],
                q0_mvar: self.q_mvar[i],
            })?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }
}

/// Seeded synthetic demand: rated values modulated by a band-limited random
/// walk confined to +/- `amplitude` (fraction), 20 ms steps.
pub fn synthetic_profile(p_mw: f64, q_mvar: f64, duration_s: f64, amplitude: f64, seed: u64) -> LoadProfile {
    let n = (duration_s * 1000.0 / PROFILE_STEP_MS as f64).ceil() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = Normal::new(0.0, amplitude * 0.05).expect("finite sigma");
    let mut walk = 0.0f64;
    let mut smooth = 0.0f64;
    let mut out = LoadProfile {
        t_ms: Vec::with_capacity(n),
        p_mw: Vec::with_capacity(n),
        q_mvar: Vec::with_capacity(n),
    };
    for k in 0..n {
        walk = (0.999 * walk + step.sample(&mut rng)).clamp(-amplitude, amplitude);
        smooth += 0.2 * (walk - smooth);
        out.t_ms.push(k as u64 * PROFILE_STEP_MS);
        out.p_mw.push(p_mw * (1.0 + smooth));
        out.q_mvar.push(q_mvar * (1.0 + smooth));
    }
    out
}
