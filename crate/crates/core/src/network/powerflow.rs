use nalgebra::{DMatrix, DVector};

use super::{AdmittanceMatrix, BusKind, C64, BASE_MVA};
use crate::error::{Error, Result};

/// Specified quantities for a power-flow solve, one entry per bus (pu).
///
/// `p` is used at pv and pq buses, `q` at pq buses and `vm` at pv and slack
/// buses. The slack angle is fixed at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionTargets {
    pub kinds: Vec<BusKind>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub vm: Vec<f64>,
}

impl InjectionTargets {
    pub fn flat(kinds: Vec<BusKind>) -> Self {
        let n = kinds.len();
        Self {
            kinds,
            p: vec![0.0; n],
            q: vec![0.0; n],
            vm: vec![1.0; n],
        }
    }

    /// Unknown ordering: angles of non-slack buses, then magnitudes of PQ
    /// buses.
    pub fn layout(&self) -> (Vec<usize>, Vec<usize>) {
        let pvpq = (0..self.kinds.len())
            .filter(|&i| self.kinds[i] != BusKind::Slack)
            .collect();
        let pq = (0..self.kinds.len())
            .filter(|&i| self.kinds[i] == BusKind::Pq)
            .collect();
        (pvpq, pq)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerFlowOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub voltages: Vec<C64>,
    /// Realized net complex injection per bus, pu.
    pub injections: Vec<C64>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn magnitude(&self, i: usize) -> f64 {
        self.voltages[i].norm()
    }

    pub fn angle(&self, i: usize) -> f64 {
        self.voltages[i].arg()
    }

    /// Net injection at bus `i` in (MW, MVar).
    pub fn injection_mw(&self, i: usize) -> (f64, f64) {
        let s = self.injections[i] * BASE_MVA;
        (s.re, s.im)
    }
}

fn calc_power(y: &AdmittanceMatrix, v: &[C64]) -> Vec<C64> {
    let ym = y.matrix();
    let n = v.len();
    (0..n)
        .map(|i| {
            let mut current = C64::new(0.0, 0.0);
            for k in 0..n {
                current += ym[(i, k)] * v[k];
            }
            v[i] * current.conj()
        })
        .collect()
}

fn phasors(vm: &[f64], va: &[f64]) -> Vec<C64> {
    vm.iter()
        .zip(va)
        .map(|(&m, &a)| C64::from_polar(m, a))
        .collect()
}

/// Power mismatch `calc - spec`, ordered `[P at pv+pq buses; Q at pq buses]`.
pub fn mismatch(y: &AdmittanceMatrix, targets: &InjectionTargets, vm: &[f64], va: &[f64]) -> DVector<f64> {
    let (pvpq, pq) = targets.layout();
    let s = calc_power(y, &phasors(vm, va));
    let mut f = DVector::zeros(pvpq.len() + pq.len());
    for (r, &i) in pvpq.iter().enumerate() {
        f[r] = s[i].re - targets.p[i];
    }
    for (r, &i) in pq.iter().enumerate() {
        f[pvpq.len() + r] = s[i].im - targets.q[i];
    }
    f
}

/// Analytic Jacobian of [`mismatch`] with respect to
/// `[angle at pv+pq buses; magnitude at pq buses]`.
pub fn jacobian(y: &AdmittanceMatrix, targets: &InjectionTargets, vm: &[f64], va: &[f64]) -> DMatrix<f64> {
    let (pvpq, pq) = targets.layout();
    let ym = y.matrix();
    let n = vm.len();
    let v = phasors(vm, va);
    let current: Vec<C64> = (0..n)
        .map(|i| (0..n).map(|k| ym[(i, k)] * v[k]).sum())
        .collect();
    let unit: Vec<C64> = v.iter().map(|x| x / x.norm()).collect();
    let j = C64::new(0.0, 1.0);

    // dS_i/dtheta_k and dS_i/d|V_k| in polar form.
    let ds_da = |i: usize, k: usize| -> C64 {
        let mut d = -v[i] * (ym[(i, k)] * v[k]).conj();
        if i == k {
            d += v[i] * current[i].conj();
        }
        j * d
    };
    let ds_dm = |i: usize, k: usize| -> C64 {
        let mut d = v[i] * (ym[(i, k)] * unit[k]).conj();
        if i == k {
            d += current[i].conj() * unit[i];
        }
        d
    };

    let np = pvpq.len();
    let mut jac = DMatrix::zeros(np + pq.len(), np + pq.len());
    for (r, &i) in pvpq.iter().enumerate() {
        for (c, &k) in pvpq.iter().enumerate() {
            jac[(r, c)] = ds_da(i, k).re;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(r, np + c)] = ds_dm(i, k).re;
        }
    }
    for (r, &i) in pq.iter().enumerate() {
        for (c, &k) in pvpq.iter().enumerate() {
            jac[(np + r, c)] = ds_da(i, k).im;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(np + r, np + c)] = ds_dm(i, k).im;
        }
    }
    jac
}

/// Newton-Raphson power flow in polar coordinates from a flat start.
pub fn solve_power_flow(
    y: &AdmittanceMatrix,
    targets: &InjectionTargets,
    opts: &PowerFlowOptions,
) -> Result<PowerFlowSolution> {
    let n = y.order();
    if targets.kinds.len() != n || targets.p.len() != n || targets.q.len() != n || targets.vm.len() != n {
        return Err(Error::Structural(format!(
            "injection targets sized for {} buses, network has {n}",
            targets.kinds.len()
        )));
    }
    if targets.kinds.iter().filter(|k| **k == BusKind::Slack).count() != 1 {
        return Err(Error::Structural("power flow needs exactly one slack bus".into()));
    }
    let (pvpq, pq) = targets.layout();
    let mut vm: Vec<f64> = (0..n)
        .map(|i| match targets.kinds[i] {
            BusKind::Pq => 1.0,
            _ => targets.vm[i],
        })
        .collect();
    let mut va = vec![0.0; n];

    let mut f = mismatch(y, targets, &vm, &va);
    let mut norm = f.amax();
    let mut iterations = 0;
    while norm >= opts.tolerance {
        if iterations >= opts.max_iterations || !norm.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                mismatch: norm,
            });
        }
        let jac = jacobian(y, targets, &vm, &va);
        let dx = jac.lu().solve(&(-&f)).ok_or(Error::NonConvergence {
            iterations,
            mismatch: norm,
        })?;
        for (r, &i) in pvpq.iter().enumerate() {
            va[i] += dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            vm[i] += dx[pvpq.len() + r];
        }
        iterations += 1;
        f = mismatch(y, targets, &vm, &va);
        norm = f.amax();
    }
    let voltages = phasors(&vm, &va);
    let injections = calc_power(y, &voltages);
    Ok(PowerFlowSolution {
        voltages,
        injections,
        iterations,
        max_mismatch: norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_admittance, Branch, Bus, NetworkData};

    fn two_bus(x: f64) -> AdmittanceMatrix {
        let buses = vec![
            Bus {
                id: 1,
                kind: BusKind::Slack,
                voltage_setpoint: 1.0,
                base_kv: 345.0,
            },
            Bus {
                id: 2,
                kind: BusKind::Pq,
                voltage_setpoint: 1.0,
                base_kv: 345.0,
            },
        ];
        let br = Branch {
            from: 1,
            to: 2,
            r: 0.0,
            x,
            b: 0.0,
            tap: 0.0,
        };
        build_admittance(&buses, &[br]).unwrap()
    }

    #[test]
    fn zero_injections_give_flat_profile() {
        let net = NetworkData::ieee39();
        let y = build_admittance(&net.buses, &net.branches).unwrap();
        let mut t = InjectionTargets::flat(net.buses.iter().map(|b| b.kind).collect());
        t.vm = vec![1.0; 39];
        // Line charging still produces reactive flows, so compare against a
        // network without charging.
        let no_charging: Vec<Branch> = net
            .branches
            .iter()
            .map(|b| Branch {
                b: 0.0,
                tap: 0.0,
                ..b.clone()
            })
            .collect();
        let y0 = build_admittance(&net.buses, &no_charging).unwrap();
        let sol = solve_power_flow(&y0, &t, &PowerFlowOptions::default()).unwrap();
        for v in &sol.voltages {
            assert!((v - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
        assert!(y.order() == 39);
    }

    #[test]
    fn two_bus_matches_closed_form() {
        // Lossless line j0.1, V1 = 1, load P = 1 at bus 2, Q = 0.
        // With V2 = V e^{j d}: P = -V sin(d)/x and 0 = (V^2 - V cos d)/x,
        // so V = cos d and sin(2d) = -2 P x.
        let y = two_bus(0.1);
        let mut t = InjectionTargets::flat(vec![BusKind::Slack, BusKind::Pq]);
        t.p[1] = -1.0;
        let sol = solve_power_flow(&y, &t, &PowerFlowOptions::default()).unwrap();
        let d = -0.5 * (2.0f64 * 1.0 * 0.1).asin();
        let vmag = d.cos();
        assert!((sol.magnitude(1) - vmag).abs() < 1e-9);
        assert!((sol.angle(1) - d).abs() < 1e-9);
        assert!((sol.injection_mw(0).0 - 100.0).abs() < 1e-6);
    }

    #[test]
    fn divergence_reports_last_mismatch() {
        // Far beyond the two-bus loadability limit (P_max = 1/(2x) = 5).
        let y = two_bus(0.1);
        let mut t = InjectionTargets::flat(vec![BusKind::Slack, BusKind::Pq]);
        t.p[1] = -20.0;
        match solve_power_flow(&y, &t, &PowerFlowOptions::default()) {
            Err(Error::NonConvergence { mismatch, .. }) => assert!(mismatch > 1e-8),
            other => panic!("expected nonconvergence, got {other:?}"),
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let net = NetworkData::ieee39();
        let y = build_admittance(&net.buses, &net.branches).unwrap();
        let kinds: Vec<BusKind> = net.buses.iter().map(|b| b.kind).collect();
        let mut t = InjectionTargets::flat(kinds.clone());
        for l in &net.loads {
            let i = net.index_of(l.bus).unwrap();
            t.p[i] -= l.p_mw / BASE_MVA;
            t.q[i] -= l.q_mvar / BASE_MVA;
        }
        // An arbitrary non-flat operating point.
        let vm: Vec<f64> = (0..39).map(|i| 1.0 + 0.01 * ((i as f64) * 0.7).sin()).collect();
        let va: Vec<f64> = (0..39).map(|i| 0.05 * ((i as f64) * 1.3).cos()).collect();
        let jac = jacobian(&y, &t, &vm, &va);
        let (pvpq, pq) = t.layout();
        let h = 1e-6;
        for c in 0..jac.ncols() {
            let (mut vp, mut ap) = (vm.clone(), va.clone());
            let (mut vn, mut an) = (vm.clone(), va.clone());
            if c < pvpq.len() {
                ap[pvpq[c]] += h;
                an[pvpq[c]] -= h;
            } else {
                vp[pq[c - pvpq.len()]] += h;
                vn[pq[c - pvpq.len()]] -= h;
            }
            let fd = (mismatch(&y, &t, &vp, &ap) - mismatch(&y, &t, &vn, &an)) / (2.0 * h);
            for r in 0..jac.nrows() {
                let a = jac[(r, c)];
                let scale = a.abs().max(1.0);
                assert!((a - fd[r]).abs() / scale < 1e-6, "({r},{c}): {a} vs {}", fd[r]);
            }
        }
    }
}
