//! Synchronous machines: sixth-order electrical model, DC1A exciter,
//! hydro and steam turbine-governors and the secondary frequency regulator.
//!
//! Machine electrical quantities and `H` are on the 100 MVA system base.
//! Governor and secondary-control signals are on the machine rating.

mod exciter;
mod governor;

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{BASE_MVA, C64, OMEGA_NOMINAL};
use crate::ode::impl_continuous;
use crate::table::Tables;

pub use exciter::{exciter_step, ExciterParams, ExciterState};
pub use governor::{
    governor_step, hydro_governor_tuning, secondary_control_step, GovernorParams, GovernorState,
    HydroParams, HydroTuning, SecondaryController, SteamParams,
};

const SHIPPED_MACHINES: &str = include_str!("../../data/ieee39_machines.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GovernorKind {
    Hydro,
    Steam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineParams {
    pub name: String,
    pub bus: u32,
    pub rating_mva: f64,
    /// Inertia constant on the 100 MVA base, s.
    pub h: f64,
    pub d: f64,
    pub ra: f64,
    pub xd: f64,
    pub xq: f64,
    pub xd1: f64,
    pub xq1: f64,
    pub xd2: f64,
    pub xq2: f64,
    pub td01: f64,
    pub tq01: f64,
    pub td02: f64,
    pub tq02: f64,
    pub governor: GovernorKind,
}

impl MachineParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Domain(format!("machine {}: {msg}", self.name)));
        if !(self.xd >= self.xd1 && self.xd1 >= self.xd2 && self.xd2 > 0.0) {
            return bad("requires xd >= xd' >= xd'' > 0");
        }
        if !(self.xq >= self.xq1 && self.xq1 >= self.xq2 && self.xq2 > 0.0) {
            return bad("requires xq >= xq' >= xq'' > 0");
        }
        if [self.td01, self.tq01, self.td02, self.tq02].iter().any(|t| !(*t > 0.0)) {
            return bad("time constants must be positive");
        }
        if !(self.h > 0.0) || !(self.rating_mva > 0.0) {
            return bad("H and rating must be positive");
        }
        Ok(())
    }

    /// Inertia constant on the machine rating.
    pub fn h_machine_base(&self) -> f64 {
        self.h * BASE_MVA / self.rating_mva
    }

    /// Machine-base to system-base power factor.
    pub fn power_scale(&self) -> f64 {
        self.rating_mva / BASE_MVA
    }

    /// Norton impedance used in the augmented network matrix.
    pub fn norton_impedance(&self) -> C64 {
        C64::new(self.ra, self.xd2)
    }
}

/// Rotor angle, speed deviation and the four emf states.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MachineState {
    pub delta: f64,
    pub dw: f64,
    pub eq1: f64,
    pub ed1: f64,
    pub eq2: f64,
    pub ed2: f64,
}
impl_continuous!(MachineState { delta, dw, eq1, ed1, eq2, ed2 });

/// Park projection of a network phasor onto the machine frame,
/// `x_d = |X| sin(delta - theta)`, `x_q = |X| cos(delta - theta)`.
pub fn to_dq(x: C64, delta: f64) -> (f64, f64) {
    let (s, c) = delta.sin_cos();
    (x.re * s - x.im * c, x.re * c + x.im * s)
}

pub fn from_dq(d: f64, q: f64, delta: f64) -> C64 {
    let (s, c) = delta.sin_cos();
    C64::new(d * s + q * c, q * s - d * c)
}

/// Stator currents from the subtransient emfs and terminal voltage.
pub fn stator_currents(x: &MachineState, p: &MachineParams, vd: f64, vq: f64) -> (f64, f64) {
    // ra*id - xq''*iq = ed'' - vd ;  xd''*id + ra*iq = eq'' - vq
    let det = p.ra * p.ra + p.xd2 * p.xq2;
    let a = x.ed2 - vd;
    let b = x.eq2 - vq;
    let id = (p.ra * a + p.xq2 * b) / det;
    let iq = (p.ra * b - p.xd2 * a) / det;
    (id, iq)
}

/// Electrical (air-gap) power for given stator currents, system base.
pub fn electrical_power(p: &MachineParams, vd: f64, vq: f64, id: f64, iq: f64) -> f64 {
    vd * id + vq * iq + p.ra * (id * id + iq * iq)
}

/// Terminal current phasor injected into the network.
pub fn terminal_current(x: &MachineState, p: &MachineParams, v: C64) -> C64 {
    let (vd, vq) = to_dq(v, x.delta);
    let (id, iq) = stator_currents(x, p, vd, vq);
    from_dq(id, iq, x.delta)
}

/// Time derivatives of the sixth-order model for a terminal voltage in the
/// machine frame, field voltage `efd` and mechanical power `pm` (system base).
pub fn machine_derivatives(
    x: &MachineState,
    p: &MachineParams,
    v_dq: (f64, f64),
    efd: f64,
    pm: f64,
) -> MachineState {
    let (vd, vq) = v_dq;
    let (id, iq) = stator_currents(x, p, vd, vq);
    let pe = electrical_power(p, vd, vq, id, iq);
    MachineState {
        delta: OMEGA_NOMINAL * x.dw,
        dw: (pm - pe - p.d * x.dw) / (2.0 * p.h),
        eq1: (-x.eq1 - (p.xd - p.xd1) * id + efd) / p.td01,
        ed1: (-x.ed1 + (p.xq - p.xq1) * iq) / p.tq01,
        eq2: (-x.eq2 + x.eq1 - (p.xd1 - p.xd2) * id) / p.td02,
        ed2: (-x.ed2 + x.ed1 + (p.xq1 - p.xq2) * iq) / p.tq02,
    }
}

/// Equilibrium of a machine delivering complex power `s` (system base) at
/// terminal voltage `v`.
#[derive(Debug, Clone, Copy)]
pub struct MachineEquilibrium {
    pub state: MachineState,
    pub efd: f64,
    pub pm: f64,
}

pub fn init_machine(p: &MachineParams, v: C64, s: C64) -> MachineEquilibrium {
    let i = (s / v).conj();
    let eq_axis = v + C64::new(p.ra, p.xq) * i;
    let delta = eq_axis.arg();
    let (vd, vq) = to_dq(v, delta);
    let (id, iq) = to_dq(i, delta);
    let eq2 = vq + p.ra * iq + p.xd2 * id;
    let ed2 = vd + p.ra * id - p.xq2 * iq;
    let ed1 = (p.xq - p.xq1) * iq;
    let eq1 = eq2 + (p.xd1 - p.xd2) * id;
    let efd = eq1 + (p.xd - p.xd1) * id;
    MachineEquilibrium {
        state: MachineState {
            delta,
            dw: 0.0,
            eq1,
            ed1,
            eq2,
            ed2,
        },
        efd,
        pm: electrical_power(p, vd, vq, id, iq),
    }
}

/// One generating unit: machine, exciter, governor and optional secondary
/// participation.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSpec {
    pub machine: MachineParams,
    pub exciter: ExciterParams,
    pub governor: GovernorParams,
    pub secondary: Option<SecondaryController>,
}

/// Parsed machine dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineDataset {
    pub units: Vec<UnitSpec>,
}

impl MachineDataset {
    pub fn ieee39() -> Self {
        Self::parse(SHIPPED_MACHINES, "ieee39_machines.txt").expect("shipped machine dataset parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let t = Tables::parse(text, source)?;
        let mut exciters = HashMap::new();
        for row in t.section("exciters")? {
            t.expect_width(row, 14)?;
            let name: String = t.field(row, 0, "name")?;
            let f = |c: usize, w: &str| t.field::<f64>(row, c, w);
            let exc = ExciterParams {
                tr: f(1, "tr")?,
                ka: f(2, "ka")?,
                ta: f(3, "ta")?,
                ke: f(4, "ke")?,
                te: f(5, "te")?,
                kf: f(6, "kf")?,
                tf: f(7, "tf")?,
                ax: f(8, "ax")?,
                bx: f(9, "bx")?,
                vr_min: f(10, "vrmin")?,
                vr_max: f(11, "vrmax")?,
                efd_min: f(12, "efdmin")?,
                efd_max: f(13, "efdmax")?,
            };
            exc.validate().map_err(|e| Error::parse(source, row.line, e.to_string()))?;
            exciters.insert(name, exc);
        }
        let mut hydro = HashMap::new();
        for row in t.optional_section("hydro") {
            t.expect_width(row, 6)?;
            let name: String = t.field(row, 0, "name")?;
            hydro.insert(
                name,
                (
                    t.field::<f64>(row, 1, "rp")?,
                    t.field::<f64>(row, 2, "tg")?,
                    t.field::<f64>(row, 3, "gmin")?,
                    t.field::<f64>(row, 4, "gmax")?,
                    t.field::<f64>(row, 5, "rate")?,
                ),
            );
        }
        let mut steam = HashMap::new();
        for row in t.optional_section("steam") {
            t.expect_width(row, 13)?;
            let name: String = t.field(row, 0, "name")?;
            let f = |c: usize, w: &str| t.field::<f64>(row, c, w);
            steam.insert(
                name,
                SteamParams {
                    rp: f(1, "rp")?,
                    tsr: f(2, "tsr")?,
                    tsm: f(3, "tsm")?,
                    tch: f(4, "tch")?,
                    trh: f(5, "trh")?,
                    tco: f(6, "tco")?,
                    fhp: f(7, "fhp")?,
                    fip: f(8, "fip")?,
                    flp: f(9, "flp")?,
                    pmax: f(10, "pmax")?,
                    uo: f(11, "uo")?,
                    uc: f(12, "uc")?,
                },
            );
        }
        let mut secondary = HashMap::new();
        for row in t.optional_section("secondary") {
            t.expect_width(row, 3)?;
            let name: String = t.field(row, 0, "name")?;
            secondary.insert(
                name,
                SecondaryController {
                    gain: t.field(row, 1, "gain")?,
                    ti: t.field(row, 2, "ti")?,
                },
            );
        }

        let mut units = Vec::new();
        for row in t.section("machines")? {
            t.expect_width(row, 17)?;
            let name: String = t.field(row, 0, "name")?;
            let f = |c: usize, w: &str| t.field::<f64>(row, c, w);
            let gov_raw: String = t.field(row, 16, "governor")?;
            let governor = match gov_raw.as_str() {
                "hydro" => GovernorKind::Hydro,
                "steam" => GovernorKind::Steam,
                other => {
                    return Err(Error::parse(source, row.line, format!("unknown governor `{other}`")))
                }
            };
            let machine = MachineParams {
                name: name.clone(),
                bus: t.field(row, 1, "bus")?,
                rating_mva: f(2, "mva")?,
                h: f(3, "H")?,
                d: f(4, "D")?,
                ra: f(5, "ra")?,
                xd: f(6, "xd")?,
                xq: f(7, "xq")?,
                xd1: f(8, "xd1")?,
                xq1: f(9, "xq1")?,
                xd2: f(10, "xd2")?,
                xq2: f(11, "xq2")?,
                td01: f(12, "td01")?,
                tq01: f(13, "tq01")?,
                td02: f(14, "td02")?,
                tq02: f(15, "tq02")?,
                governor,
            };
            machine
                .validate()
                .map_err(|e| Error::parse(source, row.line, e.to_string()))?;
            let missing = |what: &str| Error::parse(source, row.line, format!("no {what} row for {name}"));
            let exciter = exciters.get(&name).cloned().ok_or_else(|| missing("exciter"))?;
            let governor = match governor {
                GovernorKind::Hydro => {
                    let (rp, tg, gmin, gmax, rate) = *hydro.get(&name).ok_or_else(|| missing("hydro"))?;
                    GovernorParams::Hydro(HydroParams::tuned(machine.h_machine_base(), rp, tg, gmin, gmax, rate)?)
                }
                GovernorKind::Steam => {
                    GovernorParams::Steam(steam.get(&name).cloned().ok_or_else(|| missing("steam"))?)
                }
            };
            units.push(UnitSpec {
                machine,
                exciter,
                governor,
                secondary: secondary.get(&name).cloned(),
            });
        }
        Ok(Self { units })
    }

    pub fn unit(&self, name: &str) -> Option<&UnitSpec> {
        self.units.iter().find(|u| u.machine.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine() -> MachineParams {
        MachineDataset::ieee39().unit("G6").unwrap().machine.clone()
    }

    #[test]
    fn dataset_inertia_totals() {
        let ds = MachineDataset::ieee39();
        assert_eq!(ds.units.len(), 10);
        let total: f64 = ds.units.iter().map(|u| u.machine.h).sum();
        assert!((total - 782.7).abs() < 1e-9);
        let reduced: f64 = ds
            .units
            .iter()
            .filter(|u| !["G1", "G5", "G8", "G9"].contains(&u.machine.name.as_str()))
            .map(|u| u.machine.h)
            .sum();
        assert!((reduced - 197.9).abs() < 1e-9);
    }

    #[test]
    fn only_g7_has_secondary() {
        let ds = MachineDataset::ieee39();
        let with: Vec<&str> = ds
            .units
            .iter()
            .filter(|u| u.secondary.is_some())
            .map(|u| u.machine.name.as_str())
            .collect();
        assert_eq!(with, ["G7"]);
    }

    #[test]
    fn parse_is_exact() {
        let g10 = MachineDataset::ieee39().unit("G10").unwrap().machine.clone();
        assert_eq!(g10.bus, 30);
        assert_eq!(g10.xd1, 0.031);
        assert_eq!(g10.td01, 10.2);
    }

    #[test]
    fn bad_reactance_order_rejected() {
        let text = SHIPPED_MACHINES.replace("G2    31   1000   30.3   0  0   0.295", "G2    31   1000   30.3   0  0   0.01");
        assert!(MachineDataset::parse(&text, "t").is_err());
    }

    #[test]
    fn swing_example() {
        let mut p = machine();
        p.h = 3.5;
        p.d = 0.0;
        // Build a state whose electrical power is known, then set Pm 0.1 above.
        let eq = init_machine(&p, C64::new(1.0, 0.1), C64::new(4.0, 1.0));
        let v_dq = to_dq(C64::new(1.0, 0.1), eq.state.delta);
        let d = machine_derivatives(&eq.state, &p, v_dq, eq.efd, eq.pm + 0.1);
        assert!((d.dw - 1.0 / 70.0).abs() < 1e-12);
    }

    #[test]
    fn angle_rate_example() {
        let p = machine();
        let eq = init_machine(&p, C64::new(1.0, 0.0), C64::new(5.0, 0.5));
        let mut x = eq.state;
        x.dw = 0.01;
        let d = machine_derivatives(&x, &p, to_dq(C64::new(1.0, 0.0), x.delta), eq.efd, eq.pm);
        assert!((d.delta - 3.76991).abs() < 1e-5);
    }

    #[test]
    fn equilibrium_has_zero_derivatives() {
        for u in MachineDataset::ieee39().units {
            let v = C64::from_polar(1.02, 0.3);
            let s = C64::new(6.0, -1.5);
            let eq = init_machine(&u.machine, v, s);
            let d = machine_derivatives(&eq.state, &u.machine, to_dq(v, eq.state.delta), eq.efd, eq.pm);
            for c in [d.delta, d.dw, d.eq1, d.ed1, d.eq2, d.ed2] {
                assert!(c.abs() < 1e-8, "{}: {d:?}", u.machine.name);
            }
            // The terminal current reproduces the requested power.
            let i = terminal_current(&eq.state, &u.machine, v);
            assert!((v * i.conj() - s).norm() < 1e-10);
        }
    }

    #[test]
    fn park_round_trip() {
        let x = C64::new(0.3, -0.8);
        let (d, q) = to_dq(x, 0.7);
        assert!((from_dq(d, q, 0.7) - x).norm() < 1e-15);
        let v = C64::from_polar(1.1, 0.2);
        let (vd, vq) = to_dq(v, 0.9);
        assert!((vd - 1.1 * (0.9f64 - 0.2).sin()).abs() < 1e-15);
        assert!((vq - 1.1 * (0.9f64 - 0.2).cos()).abs() < 1e-15);
    }

    #[test]
    fn norton_matches_exact_current_without_saliency() {
        let p = machine();
        let eq = init_machine(&p, C64::new(1.0, 0.05), C64::new(7.0, 1.0));
        let e2 = from_dq(eq.state.ed2, eq.state.eq2, eq.state.delta);
        let v = C64::new(0.97, 0.02);
        let norton = (e2 - v) / p.norton_impedance();
        assert!((terminal_current(&eq.state, &p, v) - norton).norm() < 1e-12);
    }
}
