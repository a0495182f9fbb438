use crate::converter::{FollowingCtrl, FollowingState, FormingCtrl, FormingState};
use crate::loads::{load_power, LoadParams, LoadProfile, WindowedMeasurement};
use crate::machines::{
    terminal_current, ExciterState, GovernorState, MachineState, UnitSpec,
};
use crate::network::C64;
use crate::ode::Continuous;
use crate::storage::{BatteryParams, BatteryState};
use crate::wind::{WindPlant, WindProfile};

/// A synchronous unit placed on the network.
#[derive(Debug, Clone)]
pub struct Unit {
    pub spec: UnitSpec,
    pub bus: usize,
    pub in_service: bool,
    pub vref: f64,
    /// Power reference, pu of the unit rating.
    pub pref: f64,
    /// Norton admittance, system base.
    pub y: C64,
}

impl Unit {
    pub fn name(&self) -> &str {
        &self.spec.machine.name
    }

    /// Network current with the Norton admittance part added back, so that
    /// the matrix term cancels it exactly.
    pub fn injection(&self, x: &UnitState, v: C64) -> C64 {
        terminal_current(&x.machine, &self.spec.machine, v) + self.y * v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitState {
    pub machine: MachineState,
    pub exciter: ExciterState,
    pub governor: GovernorState,
    pub secondary: f64,
}

impl Continuous for UnitState {
    fn combine(&self, terms: &[(f64, &Self)]) -> Self {
        let m: Vec<_> = terms.iter().map(|(c, k)| (*c, &k.machine)).collect();
        let e: Vec<_> = terms.iter().map(|(c, k)| (*c, &k.exciter)).collect();
        let g: Vec<_> = terms.iter().map(|(c, k)| (*c, &k.governor)).collect();
        let s: Vec<_> = terms.iter().map(|(c, k)| (*c, &k.secondary)).collect();
        Self {
            machine: self.machine.combine(&m),
            exciter: self.exciter.combine(&e),
            governor: self.governor.combine(&g),
            secondary: self.secondary.combine(&s),
        }
    }
}

/// Voltage- and frequency-dependent load with its sampled measurements.
#[derive(Debug, Clone)]
pub struct LoadDevice {
    pub bus_id: u32,
    pub bus: usize,
    /// Current base demand, system pu.
    pub p0: f64,
    pub q0: f64,
    /// Calibrated demand at t = 0, system pu.
    pub p_init: f64,
    pub q_init: f64,
    pub params: LoadParams,
    /// Demand shape, MW, anchored so that its first sample is the
    /// calibrated demand.
    pub profile: Option<LoadProfile>,
    /// Constant-impedance part moved into the network matrix.
    pub y0: C64,
    pub freq: WindowedMeasurement,
    pub volt: WindowedMeasurement,
    /// Fixed P0 + jQ0 drawn at the instantaneous voltage.
    pub constant_pq: bool,
    pub in_service: bool,
}

impl LoadDevice {
    /// Complex demand at the held measurements, system pu.
    pub fn demand(&self) -> C64 {
        if self.fixed_power() {
            return C64::new(self.p0, self.q0);
        }
        let (p, q) = load_power(self.p0, self.q0, self.volt.reported(), self.freq.reported(), &self.params);
        C64::new(p, q)
    }

    /// Constant-PQ loads and loads with all coefficients zero.
    pub fn fixed_power(&self) -> bool {
        self.constant_pq || self.params.is_constant_power()
    }

    /// Current drawn at instantaneous voltage `v` for demand `s`: the
    /// current that realizes `s` at the reported voltage, in phase with `v`.
    /// Between reports the load is thus a constant current; below `v_min`
    /// it is a constant impedance. Fixed-power loads realize `s` at `v`.
    pub fn current(&self, s: C64, v: C64) -> C64 {
        let vm = v.norm();
        if self.fixed_power() {
            return if vm >= self.params.v_min && vm > 0.0 {
                (s / v).conj()
            } else {
                s.conj() * v / (self.params.v_min * self.params.v_min)
            };
        }
        let vr = self.volt.reported();
        if vr >= self.params.v_min && vm > 0.0 {
            s.conj() * (v / vm) / vr
        } else {
            s.conj() * v / (self.params.v_min * self.params.v_min)
        }
    }
}

#[derive(Debug, Clone)]
pub struct WindDevice {
    pub plant: WindPlant,
    pub bus: usize,
    pub profile: WindProfile,
    /// Available power, pu of rating, sampled every 1 ms.
    pub available: f64,
    pub override_available: Option<f64>,
    /// Reactive-support capacitor, system base admittance.
    pub shunt: C64,
    pub in_service: bool,
}

#[derive(Debug, Clone)]
pub enum ConverterCtrl {
    Following(FollowingCtrl),
    Forming(FormingCtrl),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConverterState {
    Following(FollowingState),
    Forming(FormingState),
}

impl Continuous for ConverterState {
    fn combine(&self, terms: &[(f64, &Self)]) -> Self {
        match self {
            ConverterState::Following(x) => {
                let t: Vec<_> = terms
                    .iter()
                    .map(|(c, k)| match k {
                        ConverterState::Following(k) => (*c, k),
                        _ => unreachable!("converter kind mismatch"),
                    })
                    .collect();
                ConverterState::Following(x.combine(&t))
            }
            ConverterState::Forming(x) => {
                let t: Vec<_> = terms
                    .iter()
                    .map(|(c, k)| match k {
                        ConverterState::Forming(k) => (*c, k),
                        _ => unreachable!("converter kind mismatch"),
                    })
                    .collect();
                ConverterState::Forming(x.combine(&t))
            }
        }
    }
}

/// Battery behind the voltage-source converter.
#[derive(Debug, Clone)]
pub struct Bess {
    pub bus: usize,
    /// Converter rating over the system base.
    pub scale: f64,
    pub ctrl: ConverterCtrl,
    /// Coupling admittance on the system base (grid-forming only).
    pub y_c: C64,
    pub battery: BatteryParams,
    pub cell: BatteryState,
    pub dc_voltage: f64,
    pub dc_current: f64,
    pub soc_clamped: bool,
    pub in_service: bool,
}

impl Bess {
    /// Output current on the system base and whether it is limited.
    pub fn current(&self, x: &ConverterState, v: C64) -> (C64, bool) {
        match (&self.ctrl, x) {
            (ConverterCtrl::Following(c), ConverterState::Following(s)) => {
                (c.current(s) * self.scale, c.current_refs(s).limited)
            }
            (ConverterCtrl::Forming(c), ConverterState::Forming(s)) => {
                let (i, lim) = c.current(s, v);
                (i * self.scale, lim)
            }
            _ => unreachable!("converter kind mismatch"),
        }
    }

    /// Network injection with the Norton part added back.
    pub fn injection(&self, x: &ConverterState, v: C64) -> C64 {
        self.current(x, v).0 + self.y_c * v
    }

    /// Complex output power, pu of the converter rating.
    pub fn power(&self, x: &ConverterState, v: C64) -> C64 {
        v * self.current(x, v).0.conj() / self.scale
    }

    pub fn derivatives(&self, x: &ConverterState, v: C64) -> ConverterState {
        match (&self.ctrl, x) {
            (ConverterCtrl::Following(c), ConverterState::Following(s)) => {
                ConverterState::Following(c.derivatives(s, v))
            }
            (ConverterCtrl::Forming(c), ConverterState::Forming(s)) => {
                let p = self.power(x, v).re;
                ConverterState::Forming(c.derivatives(s, p, v.norm()))
            }
            _ => unreachable!("converter kind mismatch"),
        }
    }

    pub fn set_p_ref(&mut self, p: f64) {
        match &mut self.ctrl {
            ConverterCtrl::Following(c) => c.p_ref = p,
            ConverterCtrl::Forming(c) => c.p_ref = p,
        }
    }
}

/// Continuous state of the whole system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub units: Vec<UnitState>,
    /// Tracked wind output, pu of rating.
    pub wind: Vec<f64>,
    pub converter: Option<ConverterState>,
}

impl Continuous for SystemState {
    fn combine(&self, terms: &[(f64, &Self)]) -> Self {
        let u: Vec<_> = terms.iter().map(|(c, k)| (*c, &k.units)).collect();
        let w: Vec<_> = terms.iter().map(|(c, k)| (*c, &k.wind)).collect();
        let v: Vec<_> = terms.iter().map(|(c, k)| (*c, &k.converter)).collect();
        Self {
            units: self.units.combine(&u),
            wind: self.wind.combine(&w),
            converter: self.converter.combine(&v),
        }
    }
}
