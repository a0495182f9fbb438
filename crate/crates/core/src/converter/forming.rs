use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{wrap_angle, C64, OMEGA_NOMINAL};
use crate::ode::impl_continuous;

/// Which magnitude the slow voltage loop regulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoltageLoop {
    /// Holds the internal emf magnitude at its setpoint.
    Internal,
    /// Regulates the PCC voltage magnitude.
    Pcc,
}

/// PLL-free grid-forming control. Powers are pu of the converter rating,
/// the coupling impedance is pu on the converter base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormingParams {
    pub mp: f64,
    pub w_lp: f64,
    pub t1: f64,
    pub t2: f64,
    pub rc: f64,
    pub xc: f64,
    pub i_max: f64,
    /// Bandwidth of the magnitude loop, rad/s.
    pub kv: f64,
    pub voltage_loop: VoltageLoop,
}

impl Default for FormingParams {
    fn default() -> Self {
        Self {
            mp: 0.05,
            w_lp: 31.4,
            t1: 0.0333,
            t2: 0.0111,
            rc: 0.005,
            xc: 0.15,
            i_max: 1.2,
            kv: 5.0,
            voltage_loop: VoltageLoop::Internal,
        }
    }
}

impl FormingParams {
    pub fn impedance(&self) -> C64 {
        C64::new(self.rc, self.xc)
    }
}

/// Lead-lag internal state, filtered power, modulated angle and emf magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FormingState {
    pub lead_lag: f64,
    pub p_filt: f64,
    pub theta: f64,
    pub vm: f64,
}
impl_continuous!(FormingState { lead_lag, p_filt, theta, vm });

#[derive(Debug, Clone, PartialEq)]
pub struct FormingCtrl {
    pub params: FormingParams,
    pub p_ref: f64,
    /// Setpoint of the magnitude loop (emf or PCC, per `voltage_loop`).
    pub v_set: f64,
}

impl FormingCtrl {
    /// Steady state delivering `s` (pu of rating) into PCC voltage `v`.
    pub fn init(params: FormingParams, v: C64, s: C64) -> (Self, FormingState) {
        let i = (s / v).conj();
        let e = v + params.impedance() * i;
        let v_set = match params.voltage_loop {
            VoltageLoop::Internal => e.norm(),
            VoltageLoop::Pcc => v.norm(),
        };
        (
            Self {
                params,
                p_ref: s.re,
                v_set,
            },
            FormingState {
                lead_lag: s.re,
                p_filt: s.re,
                theta: e.arg(),
                vm: e.norm(),
            },
        )
    }

    /// Lead-lag output for input `p`.
    pub fn lead_lag_output(&self, x: &FormingState, p: f64) -> f64 {
        x.lead_lag + self.params.t1 / self.params.t2 * (p - x.lead_lag)
    }

    /// Speed deviation `m_p (P_ref - P_f)`, pu.
    pub fn speed_deviation(&self, x: &FormingState) -> f64 {
        self.params.mp * (self.p_ref - x.p_filt)
    }

    pub fn derivatives(&self, x: &FormingState, p_meas: f64, v_meas: f64) -> FormingState {
        let p = &self.params;
        let y = self.lead_lag_output(x, p_meas);
        let err = match p.voltage_loop {
            VoltageLoop::Internal => self.v_set - x.vm,
            VoltageLoop::Pcc => self.v_set - v_meas,
        };
        FormingState {
            lead_lag: (p_meas - x.lead_lag) / p.t2,
            p_filt: p.w_lp * (y - x.p_filt),
            theta: OMEGA_NOMINAL * self.speed_deviation(x),
            vm: p.kv * err,
        }
    }

    pub fn emf(&self, x: &FormingState) -> C64 {
        C64::from_polar(x.vm, x.theta)
    }

    /// Output current into PCC voltage `v` (pu of rating) under the hard
    /// magnitude limit; the flag reports limiting.
    pub fn current(&self, x: &FormingState, v: C64) -> (C64, bool) {
        let i = (self.emf(x) - v) / self.params.impedance();
        let m = i.norm();
        if m > self.params.i_max {
            (i * (self.params.i_max / m), true)
        } else {
            (i, false)
        }
    }
}

/// Advances the controller by `dt` with the measurements held; returns the
/// commanded emf phasor.
pub fn forming_step(ctrl: &FormingCtrl, x: &FormingState, p_meas: f64, v_meas: f64, dt: f64) -> (FormingState, C64) {
    let next = crate::ode::heun(x, dt, |s| ctrl.derivatives(s, p_meas, v_meas));
    (next, ctrl.emf(&next))
}

/// Reactive power exchanged through the coupling impedance,
/// `Q = Vg/(Rc^2 + Xc^2) [Rc Vm sin(delta) + Xc (Vg - Vm cos(delta))]`.
pub fn forming_reactive_power(vg: f64, vm: f64, delta: f64, rc: f64, xc: f64) -> Result<f64> {
    let z2 = rc * rc + xc * xc;
    if !(z2 > 0.0) {
        return Err(Error::Domain("coupling impedance must be nonzero".into()));
    }
    let delta = wrap_angle(delta);
    Ok(vg / z2 * (rc * vm * delta.sin() + xc * (vg - vm * delta.cos())))
}
