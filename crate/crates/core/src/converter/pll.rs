use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::network::{C64, NOMINAL_HZ, OMEGA_NOMINAL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PllParams {
    pub kp: f64,
    pub ki: f64,
    /// Averages the q-axis voltage over one fundamental cycle.
    pub cycle_mean: bool,
    /// Output frequency filter, s.
    pub t_freq: f64,
}

impl Default for PllParams {
    fn default() -> Self {
        Self {
            kp: 60.0,
            ki: 1400.0,
            cycle_mean: true,
            t_freq: 0.02,
        }
    }
}

/// Discrete synchronous-reference-frame PLL on the positive-sequence phasor.
/// Angles are measured in the frame rotating at nominal speed.
#[derive(Debug, Clone, PartialEq)]
pub struct PllState {
    pub theta: f64,
    pub integ: f64,
    /// Speed deviation from nominal, rad/s.
    pub dw: f64,
    /// Filtered frequency estimate, pu.
    pub freq: f64,
    pub vq_mean: f64,
    history: VecDeque<f64>,
}

impl PllState {
    /// Locked on `v` at nominal frequency.
    pub fn locked(v: C64) -> Self {
        Self {
            theta: v.arg(),
            integ: 0.0,
            dw: 0.0,
            freq: 1.0,
            vq_mean: 0.0,
            history: VecDeque::from(vec![0.0; 64]),
        }
    }

    fn cycle_mean(&self, ts: f64) -> f64 {
        // Window of one cycle at the current estimate, fractional at the
        // oldest end.
        let n_real = (1.0 / (NOMINAL_HZ * self.freq.max(0.5) * ts)).min((self.history.len() - 1) as f64);
        let n = n_real.floor() as usize;
        let frac = n_real - n as f64;
        let mut sum: f64 = self.history.iter().rev().take(n).sum();
        if frac > 0.0 {
            sum += frac * self.history[self.history.len() - 1 - n];
        }
        sum / n_real
    }
}

/// One sample of the PLL; returns the frequency estimate (pu) and angle.
pub fn pll_step(p: &PllParams, x: &mut PllState, v: C64, ts: f64) -> (f64, f64) {
    let vq = v.norm() * (v.arg() - x.theta).sin();
    x.history.pop_front();
    x.history.push_back(vq);
    x.vq_mean = if p.cycle_mean { x.cycle_mean(ts) } else { vq };
    x.integ += p.ki * x.vq_mean * ts;
    x.dw = p.kp * x.vq_mean + x.integ;
    x.theta += x.dw * ts;
    let raw = 1.0 + x.dw / OMEGA_NOMINAL;
    x.freq += (raw - x.freq) * (1.0 - (-ts / p.t_freq).exp());
    (x.freq, x.theta)
}
