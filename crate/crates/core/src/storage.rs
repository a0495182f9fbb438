//! Battery stack: three RC branches behind a series resistance, with
//! SOC-bracketed parameters and coulomb-counting SOC.
//!
//! Sign convention: positive current charges the battery.

use std::path::Path;

use crate::error::{Error, Result};
use crate::table::Tables;

const SHIPPED_TABLE: &str = include_str!("../data/battery_table.txt");

/// Parameters of one SOC bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryRow {
    pub soc_lo: f64,
    pub soc_hi: f64,
    pub e: f64,
    pub rs: f64,
    pub r: [f64; 3],
    pub c: [f64; 3],
}

impl BatteryRow {
    pub fn time_constants(&self) -> [f64; 3] {
        [self.r[0] * self.c[0], self.r[1] * self.c[1], self.r[2] * self.c[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackConfig {
    pub series: u32,
    pub parallel: u32,
    pub cnom_ah: f64,
    /// Sampling time of the discrete battery model, s.
    pub ts: f64,
    pub rating_mva: f64,
    /// One-way converter efficiency.
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryParams {
    pub rows: [BatteryRow; 5],
    pub stack: StackConfig,
}

impl BatteryParams {
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_TABLE, "battery_table.txt").expect("shipped battery table parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let t = Tables::parse(text, source)?;
        let rows_raw = t.section("brackets")?;
        if rows_raw.len() != 5 {
            return Err(Error::parse(source, 0, format!("expected 5 SOC brackets, found {}", rows_raw.len())));
        }
        let mut rows = Vec::with_capacity(5);
        for (k, row) in rows_raw.iter().enumerate() {
            t.expect_width(row, 10)?;
            let f = |c: usize, w: &str| t.field::<f64>(row, c, w);
            let r = BatteryRow {
                soc_lo: f(0, "soc_lo")?,
                soc_hi: f(1, "soc_hi")?,
                e: f(2, "E")?,
                rs: f(3, "Rs")?,
                r: [f(4, "R1")?, f(6, "R2")?, f(8, "R3")?],
                c: [f(5, "C1")?, f(7, "C2")?, f(9, "C3")?],
            };
            let expected_lo = k as f64 * 0.2;
            if (r.soc_lo - expected_lo).abs() > 1e-12 || (r.soc_hi - (expected_lo + 0.2)).abs() > 1e-12 {
                return Err(Error::parse(source, row.line, "brackets must be 0-20, 20-40, ... 80-100 %"));
            }
            if !(r.rs > 0.0 && r.r.iter().chain(&r.c).all(|x| *x > 0.0)) {
                return Err(Error::parse(source, row.line, "resistances and capacitances must be positive"));
            }
            rows.push(r);
        }
        let srow = t
            .section("stack")?
            .first()
            .ok_or_else(|| Error::parse(source, 0, "empty [stack] section"))?;
        t.expect_width(srow, 6)?;
        let stack = StackConfig {
            series: t.field(srow, 0, "series")?,
            parallel: t.field(srow, 1, "parallel")?,
            cnom_ah: t.field(srow, 2, "cnom_ah")?,
            ts: t.field(srow, 3, "ts")?,
            rating_mva: t.field(srow, 4, "rating_mva")?,
            efficiency: t.field(srow, 5, "efficiency")?,
        };
        if stack.parallel == 0 || !(stack.cnom_ah > 0.0) || !(stack.ts > 0.0) || !(stack.efficiency > 0.0 && stack.efficiency <= 1.0) {
            return Err(Error::parse(source, srow.line, "invalid stack configuration"));
        }
        Ok(Self {
            rows: rows.try_into().expect("five rows"),
            stack,
        })
    }

    /// Bracket row for `soc`; brackets are half-open with the last closed.
    pub fn lookup(&self, soc: f64) -> Result<&BatteryRow> {
        battery_params_lookup(&self.rows, soc)
    }
}

pub fn battery_params_lookup(rows: &[BatteryRow; 5], soc: f64) -> Result<&BatteryRow> {
    if !(0.0..=1.0).contains(&soc) {
        return Err(Error::Domain(format!("SOC {soc} outside [0, 1]")));
    }
    let k = rows[1..].iter().filter(|r| soc >= r.soc_lo).count();
    Ok(&rows[k])
}

/// RC branch voltages and state of charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    pub vc: [f64; 3],
    pub soc: f64,
}

impl BatteryState {
    pub fn rested(soc: f64) -> Self {
        Self { vc: [0.0; 3], soc }
    }
}

/// Terminal voltage `y = sum(vCk) + Rs i/156 + E` for total current `i`.
pub fn terminal_voltage(x: &BatteryState, i_total: f64, row: &BatteryRow, parallel: u32) -> f64 {
    x.vc.iter().sum::<f64>() + row.rs * i_total / parallel as f64 + row.e
}

/// Advances the RC branches over `dt` with the current held (exact
/// zero-order-hold discretization). Returns the new state and the terminal
/// voltage at the start of the interval.
pub fn battery_step(x: &BatteryState, i_total: f64, dt: f64, row: &BatteryRow, parallel: u32) -> (BatteryState, f64) {
    let u = i_total / parallel as f64;
    let y = terminal_voltage(x, i_total, row, parallel);
    let mut next = *x;
    for k in 0..3 {
        let a = (-dt / (row.r[k] * row.c[k])).exp();
        next.vc[k] = x.vc[k] * a + row.r[k] * u * (1.0 - a);
    }
    (next, y)
}

/// `SOC' = SOC + (Ts/3600) i / Cnom`, clamped; the flag reports a clamp.
pub fn soc_update(soc: f64, i_total: f64, ts: f64, cnom_ah: f64) -> (f64, bool) {
    let next = soc + ts / 3600.0 * i_total / cnom_ah;
    let clamped = next.clamp(0.0, 1.0);
    (clamped, clamped != next)
}

/// Two packs in series: E, Rs and Rk double and Ck halves, so every RkCk is
/// preserved.
pub fn stack_parameter_scaling(cell: &BatteryRow) -> BatteryRow {
    BatteryRow {
        e: 2.0 * cell.e,
        rs: 2.0 * cell.rs,
        r: cell.r.map(|r| 2.0 * r),
        c: cell.c.map(|c| c / 2.0),
        ..*cell
    }
}

/// DC power drawn by the battery (W, charge positive) when the converter
/// injects `p_ac_w` into the grid.
pub fn dc_power_from_ac(p_ac_w: f64, efficiency: f64) -> f64 {
    if p_ac_w >= 0.0 {
        -p_ac_w / efficiency
    } else {
        -p_ac_w * efficiency
    }
}

/// Current that realizes DC power `p_w` (charge positive): the positive-power
/// root of `(Rs/156) i^2 + V0 i - P = 0`. Discharge beyond the maximum power
/// point is capped there and flagged.
pub fn dc_current_for_power(x: &BatteryState, p_w: f64, row: &BatteryRow, parallel: u32) -> (f64, bool) {
    let a = row.rs / parallel as f64;
    let v0 = x.vc.iter().sum::<f64>() + row.e;
    let disc = v0 * v0 + 4.0 * a * p_w;
    if disc < 0.0 {
        return (-v0 / (2.0 * a), true);
    }
    (2.0 * p_w / (v0 + disc.sqrt()), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> BatteryParams {
        BatteryParams::shipped()
    }

    #[test]
    fn lookup_matches_table() {
        let p = params();
        let r = p.lookup(0.5).unwrap();
        assert_eq!((r.e, r.rs, r.r[0], r.c[0]), (1305.8, 0.030, 0.180, 6998.0));
        assert_eq!(p.lookup(0.10).unwrap().e, 1184.4);
        assert_eq!(p.lookup(0.20).unwrap().e, 1250.0);
        assert_eq!(p.lookup(1.0).unwrap().e, 1466.4);
        assert_eq!(p.lookup(0.0).unwrap().e, 1184.4);
        assert_eq!(p.lookup(0.8).unwrap().r[2], 12.0e-4);
        assert!(p.lookup(1.01).is_err());
        assert!(p.lookup(-0.01).is_err());
        assert!(p.lookup(f64::NAN).is_err());
    }

    #[test]
    fn open_circuit_and_series_drop() {
        let p = params();
        let row = p.lookup(0.5).unwrap();
        let x = BatteryState::rested(0.5);
        assert_eq!(terminal_voltage(&x, 0.0, row, 156), 1305.8);
        let (_, y) = battery_step(&x, 156.0, 1e-3, row, 156);
        assert!((y - 1305.83).abs() < 1e-9);
    }

    #[test]
    fn rc_branches_follow_charging_curve() {
        // Oracle: vCk(t) = Rk u (1 - exp(-t / (Rk Ck))) at t = one time
        // constant, branch by branch.
        let p = params();
        let row = *p.lookup(0.5).unwrap();
        let i = 780.0;
        let u = i / 156.0;
        for k in 0..3 {
            let tau = row.r[k] * row.c[k];
            let dt = 1e-3;
            let steps = (tau / dt).round() as usize;
            let mut x = BatteryState::rested(0.5);
            for _ in 0..steps {
                x = battery_step(&x, i, dt, &row, 156).0;
            }
            let t = steps as f64 * dt;
            let expected = row.r[k] * u * (1.0 - (-t / tau).exp());
            assert!(((x.vc[k] - expected) / expected).abs() < 1e-6, "branch {k}");
        }
    }

    #[test]
    fn soc_examples() {
        assert_eq!(soc_update(0.4, 0.0, 1e-3, 117_000.0), (0.4, false));
        let mut soc = 0.0;
        for _ in 0..3_600_000 {
            soc = soc_update(soc, 117_000.0, 1e-3, 117_000.0).0;
        }
        assert!((soc - 1.0).abs() < 1e-9);
        let mut soc = 0.5;
        for _ in 0..36_000 {
            soc = soc_update(soc, -117_000.0, 1e-3, 117_000.0).0;
        }
        assert!((soc - 0.49).abs() < 1e-9);
        assert_eq!(soc_update(0.99999, 1e9, 1e-3, 117_000.0), (1.0, true));
    }

    proptest! {
        #[test]
        fn soc_is_linear_in_charge(currents in proptest::collection::vec(-2e5f64..2e5, 1..2000)) {
            let ts = 1e-3;
            let cnom = 117_000.0;
            let mut soc = 0.5;
            for i in &currents {
                soc = soc_update(soc, *i, ts, cnom).0;
            }
            let total: f64 = currents.iter().sum();
            let one_shot = 0.5 + ts / 3600.0 * total / cnom;
            prop_assert!((soc - one_shot).abs() < 1e-9);
        }

        #[test]
        fn dc_current_realizes_power(p in -2.5e8f64..2.5e8, soc in 0.0f64..1.0) {
            let params = params();
            let row = params.lookup(soc).unwrap();
            let x = BatteryState { vc: [3.0, -1.0, 0.5], soc };
            let (i, capped) = dc_current_for_power(&x, p, row, 156);
            prop_assert!(!capped);
            let v = terminal_voltage(&x, i, row, 156);
            prop_assert!((v * i - p).abs() < 1e-6 * p.abs().max(1.0));
            prop_assert_eq!(i > 0.0, p > 0.0);
        }
    }

    #[test]
    fn scaling_preserves_time_constants() {
        for row in params().rows {
            let cell = BatteryRow {
                e: row.e / 2.0,
                rs: row.rs / 2.0,
                r: row.r.map(|r| r / 2.0),
                c: row.c.map(|c| c * 2.0),
                ..row
            };
            let scaled = stack_parameter_scaling(&cell);
            assert_eq!(scaled, row);
            assert_eq!(scaled.time_constants(), cell.time_constants());
        }
        let cell = BatteryRow {
            soc_lo: 0.8,
            soc_hi: 1.0,
            e: 800.0,
            rs: 0.01,
            r: [0.1; 3],
            c: [100.0; 3],
        };
        assert_eq!(stack_parameter_scaling(&cell).e, 1600.0);
    }

    #[test]
    fn discharge_lowers_soc_and_voltage_across_brackets() {
        let p = params();
        let mut x = BatteryState::rested(0.401);
        let power = -2.0e8;
        let mut last_y = f64::INFINITY;
        let mut last_soc = x.soc;
        let mut crossed = false;
        for _ in 0..20_000 {
            let row = *p.lookup(x.soc).unwrap();
            let (i, _) = dc_current_for_power(&x, power, &row, 156);
            let (next, y) = battery_step(&x, i, 1e-3, &row, 156);
            let (soc, _) = soc_update(x.soc, i, 1e-3, p.stack.cnom_ah);
            x = BatteryState { soc, ..next };
            assert!(x.soc < last_soc);
            if last_soc >= 0.4 && x.soc < 0.4 {
                crossed = true;
                let below = terminal_voltage(&x, i, p.lookup(x.soc).unwrap(), 156);
                assert!(below < last_y);
            }
            last_soc = x.soc;
            last_y = y;
        }
        assert!(crossed);
    }

    #[test]
    fn efficiency_direction() {
        assert!((dc_power_from_ac(1.0e6, 0.975) + 1.0e6 / 0.975).abs() < 1e-6);
        assert!((dc_power_from_ac(-1.0e6, 0.975) - 0.975e6).abs() < 1e-6);
    }
}
