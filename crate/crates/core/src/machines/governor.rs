use crate::error::{Error, Result};
use crate::ode::{heun, impl_continuous, limit_rate, Continuous};

/// Hydro governor settings derived from the machine-base inertia constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydroTuning {
    pub tm: f64,
    pub tw: f64,
    pub kp: f64,
    pub ki: f64,
}

/// `TM = 2H`, `TM : Tw = 3 : 1`, `1/KP = 0.625 Tw / H`, `KP/KI = 3.33 Tw`.
pub fn hydro_governor_tuning(h: f64) -> Result<HydroTuning> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("inertia constant must be positive, got {h}")));
    }
    let tm = 2.0 * h;
    let tw = tm / 3.0;
    let kp = h / (0.625 * tw);
    let ki = kp / (3.33 * tw);
    Ok(HydroTuning { tm, tw, kp, ki })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydroParams {
    pub rp: f64,
    /// Gate servo time constant.
    pub tg: f64,
    pub gmin: f64,
    pub gmax: f64,
    /// Gate speed limit, pu/s.
    pub rate: f64,
    pub tuning: HydroTuning,
}

impl HydroParams {
    pub fn tuned(h_machine: f64, rp: f64, tg: f64, gmin: f64, gmax: f64, rate: f64) -> Result<Self> {
        if !(rp > 0.0) || !(tg > 0.0) || gmin >= gmax || !(rate > 0.0) {
            return Err(Error::Domain("hydro governor needs rp, tg, rate > 0 and gmin < gmax".into()));
        }
        Ok(Self {
            rp,
            tg,
            gmin,
            gmax,
            rate,
            tuning: hydro_governor_tuning(h_machine)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteamParams {
    pub rp: f64,
    /// Speed relay.
    pub tsr: f64,
    /// Valve servo.
    pub tsm: f64,
    /// Steam chest.
    pub tch: f64,
    /// Reheater.
    pub trh: f64,
    /// Crossover.
    pub tco: f64,
    pub fhp: f64,
    pub fip: f64,
    pub flp: f64,
    pub pmax: f64,
    /// Valve opening and closing speed limits, pu/s (both positive).
    pub uo: f64,
    pub uc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GovernorParams {
    Hydro(HydroParams),
    Steam(SteamParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HydroState {
    pub integ: f64,
    pub gate: f64,
    pub water: f64,
}
impl_continuous!(HydroState { integ, gate, water });

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SteamState {
    pub relay: f64,
    pub servo: f64,
    pub hp: f64,
    pub rh: f64,
    pub lp: f64,
}
impl_continuous!(SteamState { relay, servo, hp, rh, lp });

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GovernorState {
    Hydro(HydroState),
    Steam(SteamState),
}

impl Continuous for GovernorState {
    fn combine(&self, terms: &[(f64, &Self)]) -> Self {
        match self {
            GovernorState::Hydro(x) => {
                let parts: Vec<(f64, &HydroState)> = terms
                    .iter()
                    .map(|(c, k)| match k {
                        GovernorState::Hydro(k) => (*c, k),
                        _ => unreachable!("governor kind mismatch"),
                    })
                    .collect();
                GovernorState::Hydro(x.combine(&parts))
            }
            GovernorState::Steam(x) => {
                let parts: Vec<(f64, &SteamState)> = terms
                    .iter()
                    .map(|(c, k)| match k {
                        GovernorState::Steam(k) => (*c, k),
                        _ => unreachable!("governor kind mismatch"),
                    })
                    .collect();
                GovernorState::Steam(x.combine(&parts))
            }
        }
    }
}

impl GovernorParams {
    pub fn droop(&self) -> f64 {
        match self {
            GovernorParams::Hydro(p) => p.rp,
            GovernorParams::Steam(p) => p.rp,
        }
    }

    /// Steady state delivering `pm` (machine base).
    pub fn init(&self, pm: f64) -> Result<GovernorState> {
        match self {
            GovernorParams::Hydro(p) => {
                if pm < p.gmin || pm > p.gmax {
                    return Err(Error::Domain(format!("initial gate {pm:.4} outside limits")));
                }
                Ok(GovernorState::Hydro(HydroState {
                    integ: pm,
                    gate: pm,
                    water: pm,
                }))
            }
            GovernorParams::Steam(p) => {
                if pm < 0.0 || pm > p.pmax {
                    return Err(Error::Domain(format!("initial valve {pm:.4} outside limits")));
                }
                Ok(GovernorState::Steam(SteamState {
                    relay: pm,
                    servo: pm,
                    hp: pm,
                    rh: pm,
                    lp: pm,
                }))
            }
        }
    }

    /// Mechanical power output, machine base.
    pub fn pm(&self, x: &GovernorState) -> f64 {
        match (self, x) {
            (GovernorParams::Hydro(_), GovernorState::Hydro(s)) => 3.0 * s.water - 2.0 * s.gate,
            (GovernorParams::Steam(p), GovernorState::Steam(s)) => p.fhp * s.hp + p.fip * s.rh + p.flp * s.lp,
            _ => unreachable!("governor kind mismatch"),
        }
    }

    /// Derivatives for speed deviation `dw`, load reference `pref` and the
    /// secondary setpoint offset, all on the machine base.
    pub fn derivatives(&self, x: &GovernorState, dw: f64, pref: f64, offset: f64) -> GovernorState {
        match (self, x) {
            (GovernorParams::Hydro(p), GovernorState::Hydro(s)) => {
                let t = &p.tuning;
                let err = -dw - p.rp * (s.gate - (pref + offset));
                let cmd = t.kp * err + s.integ;
                let speed = ((cmd - s.gate) / p.tg).clamp(-p.rate, p.rate);
                let dgate = limit_rate(s.gate, speed, p.gmin, p.gmax);
                // Integrator is held while the gate sits on a limit in the
                // direction it is being driven.
                let saturated = dgate == 0.0 && cmd != s.gate;
                GovernorState::Hydro(HydroState {
                    integ: if saturated { 0.0 } else { t.ki * err },
                    gate: dgate,
                    water: (s.gate - s.water) / (0.5 * t.tw),
                })
            }
            (GovernorParams::Steam(p), GovernorState::Steam(s)) => {
                let cmd = pref + offset - dw / p.rp;
                GovernorState::Steam(SteamState {
                    relay: (cmd - s.relay) / p.tsr,
                    servo: limit_rate(s.servo, ((s.relay - s.servo) / p.tsm).clamp(-p.uc, p.uo), 0.0, p.pmax),
                    hp: (s.servo - s.hp) / p.tch,
                    rh: (s.hp - s.rh) / p.trh,
                    lp: (s.rh - s.lp) / p.tco,
                })
            }
            _ => unreachable!("governor kind mismatch"),
        }
    }

    pub fn project(&self, x: &mut GovernorState) {
        match (self, x) {
            (GovernorParams::Hydro(p), GovernorState::Hydro(s)) => s.gate = s.gate.clamp(p.gmin, p.gmax),
            (GovernorParams::Steam(p), GovernorState::Steam(s)) => s.servo = s.servo.clamp(0.0, p.pmax),
            _ => unreachable!("governor kind mismatch"),
        }
    }
}

/// Advances a governor by `dt` with its inputs held; returns the new state
/// and the mechanical power (machine base).
pub fn governor_step(
    p: &GovernorParams,
    x: &GovernorState,
    dw: f64,
    pref: f64,
    offset: f64,
    dt: f64,
) -> (GovernorState, f64) {
    let mut next = heun(x, dt, |s| {
        let mut s = *s;
        p.project(&mut s);
        p.derivatives(&s, dw, pref, offset)
    });
    p.project(&mut next);
    (next, p.pm(&next))
}

/// Integral secondary frequency regulator, `dz/dt = dw / ti`, whose output
/// `-gain * z` offsets the participating unit's load reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondaryController {
    pub gain: f64,
    pub ti: f64,
}

impl SecondaryController {
    pub fn derivative(&self, dw: f64) -> f64 {
        dw / self.ti
    }

    pub fn offset(&self, z: f64) -> f64 {
        -self.gain * z
    }
}

/// Advances the integrator; a unit without a controller always reports 0.
pub fn secondary_control_step(ctrl: Option<&SecondaryController>, z: f64, dw: f64, dt: f64) -> (f64, f64) {
    match ctrl {
        Some(c) => {
            let z = z + c.derivative(dw) * dt;
            (z, c.offset(z))
        }
        None => (z, 0.0),
    }
}
