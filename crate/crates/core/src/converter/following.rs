use serde::{Deserialize, Serialize};

use super::pll::{pll_step, PllParams, PllState};
use crate::network::C64;
use crate::ode::impl_continuous;

/// Grid-following control in grid-supporting mode. Powers and currents are
/// pu of the converter rating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FollowingParams {
    pub k_pf: f64,
    pub deadband_f: f64,
    pub k_qv: f64,
    pub deadband_v: f64,
    pub i_max: f64,
    /// Averaged inner current loop.
    pub tau_current: f64,
    /// PCC voltage magnitude measurement lag feeding the V-Q droop.
    pub tau_voltage: f64,
    pub pll: PllParams,
}

impl Default for FollowingParams {
    fn default() -> Self {
        Self {
            k_pf: 20.0,
            deadband_f: 0.001,
            k_qv: 10.0,
            deadband_v: 0.005,
            i_max: 1.0,
            tau_current: 0.005,
            tau_voltage: 0.2,
            pll: PllParams::default(),
        }
    }
}

fn offset_deadband(x: f64, band: f64) -> f64 {
    x.signum() * (x.abs() - band).max(0.0)
}

/// Offset-deadband droop commands, clamped to the converter rating.
pub fn following_droop(df: f64, dv: f64, p: &FollowingParams) -> (f64, f64) {
    let dp = (-p.k_pf * offset_deadband(df, p.deadband_f)).clamp(-1.0, 1.0);
    let dq = (-p.k_qv * offset_deadband(dv, p.deadband_v)).clamp(-1.0, 1.0);
    (dp, dq)
}

/// Continuous states: dq currents in the PLL frame and the filtered PCC
/// voltage magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FollowingState {
    pub id: f64,
    pub iq: f64,
    pub v_meas: f64,
}
impl_continuous!(FollowingState { id, iq, v_meas });

/// Sampled part of the controller: PLL and the references.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowingCtrl {
    pub params: FollowingParams,
    pub pll: PllState,
    pub p_ref: f64,
    pub q_ref: f64,
    /// Voltage reference for the V-Q droop.
    pub v_ref: f64,
    /// Set while the PCC voltage is below 0.1 pu.
    pub low_voltage: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentRefs {
    pub id: f64,
    pub iq: f64,
    pub limited: bool,
}

impl FollowingCtrl {
    /// Controller in steady state delivering `s` (pu of rating) at PCC
    /// voltage `v`.
    pub fn init(params: FollowingParams, v: C64, s: C64) -> (Self, FollowingState) {
        let vm = v.norm();
        let ctrl = Self {
            params,
            pll: PllState::locked(v),
            p_ref: s.re,
            q_ref: s.im,
            v_ref: vm,
            low_voltage: false,
        };
        let state = FollowingState {
            id: s.re / vm,
            iq: -s.im / vm,
            v_meas: vm,
        };
        (ctrl, state)
    }

    /// Current references with P priority under the magnitude limit.
    pub fn current_refs(&self, x: &FollowingState) -> CurrentRefs {
        let df = self.pll.freq - 1.0;
        let dv = x.v_meas - self.v_ref;
        let (dp, dq) = following_droop(df, dv, &self.params);
        let vg = x.v_meas.max(0.1);
        current_limit(
            (self.p_ref + dp) / vg,
            -(self.q_ref + dq) / vg,
            self.params.i_max,
        )
    }

    pub fn derivatives(&self, x: &FollowingState, v: C64) -> FollowingState {
        let r = self.current_refs(x);
        let tau = self.params.tau_current;
        FollowingState {
            id: (r.id - x.id) / tau,
            iq: (r.iq - x.iq) / tau,
            v_meas: (v.norm() - x.v_meas) / self.params.tau_voltage,
        }
    }

    /// Injected current phasor, pu of rating.
    pub fn current(&self, x: &FollowingState) -> C64 {
        C64::new(x.id, x.iq) * C64::from_polar(1.0, self.pll.theta)
    }

    /// Sampled update of the PLL and the low-voltage flag.
    pub fn sample(&mut self, v: C64, ts: f64) {
        pll_step(&self.params.pll, &mut self.pll, v, ts);
        self.low_voltage = v.norm() < 0.1;
    }
}

pub fn current_limit(id: f64, iq: f64, i_max: f64) -> CurrentRefs {
    let id_l = id.clamp(-i_max, i_max);
    let iq_room = (i_max * i_max - id_l * id_l).max(0.0).sqrt();
    let iq_l = iq.clamp(-iq_room, iq_room);
    CurrentRefs {
        id: id_l,
        iq: iq_l,
        limited: id_l != id || iq_l != iq,
    }
}

/// Advances the sampled PLL and the continuous current loop by `dt` with
/// the PCC voltage held; returns the injected current (pu of rating).
pub fn following_step(ctrl: &mut FollowingCtrl, x: &FollowingState, v: C64, dt: f64) -> (FollowingState, C64) {
    ctrl.sample(v, dt);
    let next = crate::ode::heun(x, dt, |s| ctrl.derivatives(s, v));
    let i = ctrl.current(&next);
    (next, i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn droop_examples() {
        let p = FollowingParams::default();
        assert_eq!(following_droop(0.0005, 0.0, &p).0, 0.0);
        assert!((following_droop(-0.011, 0.0, &p).0 - 0.2).abs() < 1e-12);
        assert!((following_droop(0.0, -0.015, &p).1 - 0.1).abs() < 1e-12);
        assert_eq!(following_droop(0.0, 0.004, &p).1, 0.0);
        assert_eq!(following_droop(-0.5, -0.5, &p), (1.0, 1.0));
    }

    proptest! {
        #[test]
        fn no_command_inside_bands(df in -0.001f64..0.001, dv in -0.005f64..0.005) {
            prop_assert_eq!(following_droop(df, dv, &FollowingParams::default()), (0.0, 0.0));
        }

        #[test]
        fn droop_is_continuous_at_band_edge(eps in 0.0f64..1e-6) {
            let p = FollowingParams::default();
            prop_assert!(following_droop(-(0.001 + eps), 0.0, &p).0 <= 20.0 * 1e-6 + 1e-15);
        }
    }

    #[test]
    fn p_priority_limit() {
        let r = current_limit(1.0, -0.5, 1.0);
        assert_eq!((r.id, r.iq), (1.0, 0.0));
        assert!(r.limited);
        let r = current_limit(0.6, -0.9, 1.0);
        assert!((r.iq + 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_references_give_zero_injection() {
        let v = C64::from_polar(1.01, -0.2);
        let (mut ctrl, mut x) = FollowingCtrl::init(FollowingParams::default(), v, C64::new(0.0, 0.0));
        let mut i = C64::new(1.0, 1.0);
        for _ in 0..500 {
            (x, i) = following_step(&mut ctrl, &x, v, 1e-3);
        }
        assert_eq!(i, C64::new(0.0, 0.0));
    }

    #[test]
    fn steady_state_delivers_reference() {
        let v = C64::from_polar(0.98, 0.3);
        let s = C64::new(0.4, -0.1);
        let (mut ctrl, mut x) = FollowingCtrl::init(FollowingParams::default(), v, s);
        let mut i = C64::new(0.0, 0.0);
        for _ in 0..500 {
            (x, i) = following_step(&mut ctrl, &x, v, 1e-3);
        }
        assert!((v * i.conj() - s).norm() < 1e-12);
    }

    #[test]
    fn commanded_overload_delivered_with_p_priority() {
        // (1.0, 0.5) pu requested at V = 1 under a 1.0 pu current limit.
        let v = C64::new(1.0, 0.0);
        let (mut ctrl, mut x) = FollowingCtrl::init(FollowingParams::default(), v, C64::new(0.0, 0.0));
        ctrl.p_ref = 1.0;
        ctrl.q_ref = 0.5;
        let mut i = C64::new(0.0, 0.0);
        for _ in 0..1000 {
            (x, i) = following_step(&mut ctrl, &x, v, 1e-3);
        }
        let s = v * i.conj();
        assert!((s.re - 1.0).abs() < 1e-9 && s.im.abs() < 1e-9);
    }

    #[test]
    fn low_voltage_flag() {
        let (mut ctrl, x) = FollowingCtrl::init(FollowingParams::default(), C64::new(1.0, 0.0), C64::new(0.5, 0.0));
        following_step(&mut ctrl, &x, C64::new(0.05, 0.0), 1e-3);
        assert!(ctrl.low_voltage);
    }
}
