//! Network data, admittance matrix, initialization power flow and the
//! per-step algebraic network solve.
//!
//! All quantities are per unit on [`BASE_MVA`]. Buses are addressed by their
//! dataset id externally and by dense index (dataset order) internally.

mod admittance;
mod powerflow;
mod solver;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{fmt_f64, Tables};

pub use admittance::{build_admittance, AdmittanceMatrix};
pub use powerflow::{
    jacobian, mismatch, solve_power_flow, InjectionTargets, PowerFlowOptions, PowerFlowSolution,
};
pub use solver::{solve_network_algebraic, AlgebraicOptions, AlgebraicSolution, NetworkSolver};

/// System power base.
pub const BASE_MVA: f64 = 100.0;
/// Nominal frequency of the New England system.
pub const NOMINAL_HZ: f64 = 60.0;
/// Nominal electrical angular speed, rad/s.
pub const OMEGA_NOMINAL: f64 = 2.0 * std::f64::consts::PI * NOMINAL_HZ;

pub type C64 = Complex64;

const SHIPPED_39: &str = include_str!("../../data/ieee39_network.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

impl BusKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "slack" => Some(BusKind::Slack),
            "pv" => Some(BusKind::Pv),
            "pq" => Some(BusKind::Pq),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            BusKind::Slack => "slack",
            BusKind::Pv => "pv",
            BusKind::Pq => "pq",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    /// Voltage magnitude setpoint, used at pv and slack buses.
    pub voltage_setpoint: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    /// Off-nominal ratio on the `from` side; `0` is read as 1.
    pub tap: f64,
}

impl Branch {
    pub fn series_impedance(&self) -> C64 {
        C64::new(self.r, self.x)
    }

    pub fn ratio(&self) -> f64 {
        if self.tap == 0.0 {
            1.0
        } else {
            self.tap
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusLoad {
    pub bus: u32,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusShunt {
    pub bus: u32,
    pub g_mw: f64,
    pub b_mvar: f64,
}

/// Parsed network dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkData {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub loads: Vec<BusLoad>,
    pub shunts: Vec<BusShunt>,
}

impl NetworkData {
    /// The shipped IEEE 39-bus dataset.
    pub fn ieee39() -> Self {
        Self::parse(SHIPPED_39, "ieee39_network.txt").expect("shipped network dataset parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let t = Tables::parse(text, source)?;
        let mut buses = Vec::new();
        for row in t.section("buses")? {
            t.expect_width(row, 4)?;
            let kind_raw: String = t.field(row, 1, "kind")?;
            let kind = BusKind::parse(&kind_raw)
                .ok_or_else(|| Error::parse(source, row.line, format!("unknown bus kind `{kind_raw}`")))?;
            buses.push(Bus {
                id: t.field(row, 0, "id")?,
                kind,
                voltage_setpoint: t.field(row, 2, "vset_pu")?,
                base_kv: t.field(row, 3, "base_kv")?,
            });
        }
        let mut branches = Vec::new();
        for row in t.section("branches")? {
            t.expect_width(row, 6)?;
            branches.push(Branch {
                from: t.field(row, 0, "from")?,
                to: t.field(row, 1, "to")?,
                r: t.field(row, 2, "r_pu")?,
                x: t.field(row, 3, "x_pu")?,
                b: t.field(row, 4, "b_pu")?,
                tap: t.field(row, 5, "tap")?,
            });
        }
        let mut loads = Vec::new();
        for row in t.optional_section("loads") {
            t.expect_width(row, 3)?;
            loads.push(BusLoad {
                bus: t.field(row, 0, "bus")?,
                p_mw: t.field(row, 1, "p_mw")?,
                q_mvar: t.field(row, 2, "q_mvar")?,
            });
        }
        let mut shunts = Vec::new();
        for row in t.optional_section("shunts") {
            t.expect_width(row, 3)?;
            shunts.push(BusShunt {
                bus: t.field(row, 0, "bus")?,
                g_mw: t.field(row, 1, "g_mw")?,
                b_mvar: t.field(row, 2, "b_mvar")?,
            });
        }
        let data = NetworkData {
            buses,
            branches,
            loads,
            shunts,
        };
        data.validate()?;
        Ok(data)
    }

    /// Canonical text form; parsing it yields an identical dataset.
    pub fn to_text(&self) -> String {
        let mut s = String::from("[buses]\n");
        for b in &self.buses {
            let _ = writeln!(
                s,
                "{} {} {} {}",
                b.id,
                b.kind.as_str(),
                fmt_f64(b.voltage_setpoint),
                fmt_f64(b.base_kv)
            );
        }
        s.push_str("\n[branches]\n");
        for br in &self.branches {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}",
                br.from,
                br.to,
                fmt_f64(br.r),
                fmt_f64(br.x),
                fmt_f64(br.b),
                fmt_f64(br.tap)
            );
        }
        s.push_str("\n[loads]\n");
        for l in &self.loads {
            let _ = writeln!(s, "{} {} {}", l.bus, fmt_f64(l.p_mw), fmt_f64(l.q_mvar));
        }
        s.push_str("\n[shunts]\n");
        for sh in &self.shunts {
            let _ = writeln!(s, "{} {} {}", sh.bus, fmt_f64(sh.g_mw), fmt_f64(sh.b_mvar));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let index = bus_index(&self.buses)?;
        let slack = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slack != 1 {
            return Err(Error::Structural(format!(
                "expected exactly one slack bus, found {slack}"
            )));
        }
        for br in &self.branches {
            check_branch(br, &index)?;
        }
        for l in &self.loads {
            if !index.contains_key(&l.bus) {
                return Err(Error::Structural(format!("load at unknown bus {}", l.bus)));
            }
        }
        for sh in &self.shunts {
            if !index.contains_key(&sh.bus) {
                return Err(Error::Structural(format!("shunt at unknown bus {}", sh.bus)));
            }
        }
        Ok(())
    }

    pub fn bus_index(&self) -> HashMap<u32, usize> {
        bus_index(&self.buses).expect("validated")
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated")
    }
}

pub(crate) fn bus_index(buses: &[Bus]) -> Result<HashMap<u32, usize>> {
    let mut index = HashMap::with_capacity(buses.len());
    for (i, b) in buses.iter().enumerate() {
        if index.insert(b.id, i).is_some() {
            return Err(Error::Structural(format!("duplicate bus id {}", b.id)));
        }
    }
    Ok(index)
}

pub(crate) fn check_branch(br: &Branch, index: &HashMap<u32, usize>) -> Result<()> {
    for end in [br.from, br.to] {
        if !index.contains_key(&end) {
            return Err(Error::Structural(format!(
                "branch {}-{} references unknown bus {end}",
                br.from, br.to
            )));
        }
    }
    if br.from == br.to {
        return Err(Error::Structural(format!("branch {}-{} is a self loop", br.from, br.to)));
    }
    if br.r == 0.0 && br.x == 0.0 {
        return Err(Error::Structural(format!(
            "branch {}-{} has zero series impedance",
            br.from, br.to
        )));
    }
    Ok(())
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_dataset_shape() {
        let net = NetworkData::ieee39();
        assert_eq!(net.buses.len(), 39);
        assert_eq!(net.branches.len(), 46);
        assert_eq!(net.loads.len(), 21);
        assert_eq!(net.buses[net.slack_index()].id, 31);
        let total: f64 = net.loads.iter().map(|l| l.p_mw).sum();
        assert!((total - 6254.23).abs() < 1e-9);
    }

    #[test]
    fn text_form_reparses_identically() {
        let net = NetworkData::ieee39();
        let again = NetworkData::parse(&net.to_text(), "roundtrip").unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn parse_reads_exact_decimal_values() {
        let net = NetworkData::ieee39();
        let br = &net.branches[0];
        assert_eq!((br.from, br.to), (1, 2));
        assert_eq!(br.r, 0.0035);
        assert_eq!(br.x, 0.0411);
        assert_eq!(br.b, 0.6987);
        assert_eq!(net.buses[38].voltage_setpoint, 1.03);
    }

    #[test]
    fn unknown_bus_is_structural() {
        let text = "[buses]\n1 slack 1 345\n2 pq 1 345\n[branches]\n1 3 0 0.1 0 0\n";
        let err = NetworkData::parse(text, "t").unwrap_err();
        assert!(matches!(err, Error::Structural(_)), "{err}");
    }

    #[test]
    fn two_slacks_rejected() {
        let text = "[buses]\n1 slack 1 345\n2 slack 1 345\n[branches]\n1 2 0 0.1 0 0\n";
        assert!(matches!(NetworkData::parse(text, "t"), Err(Error::Structural(_))));
    }

    #[test]
    fn bad_kind_reports_line() {
        let text = "[buses]\n1 slack 1 345\n2 weird 1 345\n[branches]\n";
        match NetworkData::parse(text, "t") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }
}
