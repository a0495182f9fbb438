//! Control of the battery's voltage-source converter: grid-following with
//! grid-supporting droops (behind a PLL) and PLL-free grid-forming.
//!
//! Both operate on the converter rating; the simulator converts to the
//! system base at the network interface.

mod following;
mod forming;
mod pll;

use serde::{Deserialize, Serialize};

use crate::network::{C64, OMEGA_NOMINAL};
use crate::ode::Continuous;

pub use following::{
    current_limit, following_droop, following_step, CurrentRefs, FollowingCtrl, FollowingParams, FollowingState,
};
pub use forming::{
    forming_reactive_power, forming_step, FormingCtrl, FormingParams, FormingState, VoltageLoop,
};
pub use pll::{pll_step, PllParams, PllState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Following,
    Forming,
}

impl std::str::FromStr for ControllerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "following" => Ok(Self::Following),
            "forming" => Ok(Self::Forming),
            other => Err(format!("unknown controller `{other}` (following|forming)")),
        }
    }
}

/// Steady active-power change of a controller synchronized to an infinite
/// bus running at `1 + df` pu, found by simulating the controller against
/// it for `duration` seconds.
pub fn steady_droop_response(kind: ControllerKind, df: f64, duration: f64) -> f64 {
    let dt = 1e-3;
    let steps = (duration / dt).round() as usize;
    let p0 = 0.2;
    let bus = |k: usize| C64::from_polar(1.0, OMEGA_NOMINAL * df * k as f64 * dt);
    match kind {
        ControllerKind::Forming => {
            let (ctrl, mut x) = FormingCtrl::init(FormingParams::default(), bus(0), C64::new(p0, 0.0));
            let mut p = p0;
            for k in 0..steps {
                // Each Heun stage sees the bus angle at its own instant.
                let f = |s: &FormingState, v: C64| {
                    let (i, _) = ctrl.current(s, v);
                    ctrl.derivatives(s, (v * i.conj()).re, v.norm())
                };
                let k1 = f(&x, bus(k));
                let pred = x.combine(&[(dt, &k1)]);
                let k2 = f(&pred, bus(k + 1));
                x = x.combine(&[(0.5 * dt, &k1), (0.5 * dt, &k2)]);
                let v = bus(k + 1);
                p = (v * ctrl.current(&x, v).0.conj()).re;
            }
            p - p0
        }
        ControllerKind::Following => {
            let (mut ctrl, mut x) = FollowingCtrl::init(FollowingParams::default(), bus(0), C64::new(p0, 0.0));
            let mut p = p0;
            for k in 0..steps {
                let v = bus(k);
                (x, _) = following_step(&mut ctrl, &x, v, dt);
                p = (bus(k + 1) * ctrl.current(&x).conj()).re;
            }
            p - p0
        }
    }
}
