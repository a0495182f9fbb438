use std::collections::HashMap;

use nalgebra::DMatrix;

use super::{bus_index, check_branch, Branch, Bus, C64};
use crate::error::Result;

/// Bus admittance matrix in dataset bus order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    ids: Vec<u32>,
    index: HashMap<u32, usize>,
    y: DMatrix<C64>,
}

impl AdmittanceMatrix {
    pub fn order(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.y
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.y[(i, j)]
    }

    /// Adds a shunt admittance (pu) to a diagonal entry.
    pub fn add_shunt(&mut self, idx: usize, y: C64) {
        self.y[(idx, idx)] += y;
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.y
    }
}

/// Builds the nodal admittance matrix from pi-equivalent branches.
///
/// Off-nominal taps sit on the `from` side with the usual convention
/// `Yff = (ys + jb/2)/t^2`, `Yft = Ytf = -ys/t`, `Ytt = ys + jb/2`.
pub fn build_admittance(buses: &[Bus], branches: &[Branch]) -> Result<AdmittanceMatrix> {
    let index = bus_index(buses)?;
    let n = buses.len();
    let mut y = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for br in branches {
        check_branch(br, &index)?;
        let f = index[&br.from];
        let t = index[&br.to];
        let ys = br.series_impedance().inv();
        let half_b = C64::new(0.0, br.b / 2.0);
        let ratio = br.ratio();
        y[(f, f)] += (ys + half_b) / (ratio * ratio);
        y[(t, t)] += ys + half_b;
        y[(f, t)] -= ys / ratio;
        y[(t, f)] -= ys / ratio;
    }
    Ok(AdmittanceMatrix {
        ids: buses.iter().map(|b| b.id).collect(),
        index,
        y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{BusKind, NetworkData};

    fn bus(id: u32) -> Bus {
        Bus {
            id,
            kind: if id == 1 { BusKind::Slack } else { BusKind::Pq },
            voltage_setpoint: 1.0,
            base_kv: 345.0,
        }
    }

    #[test]
    fn single_line_two_bus() {
        let br = Branch {
            from: 1,
            to: 2,
            r: 0.0,
            x: 0.1,
            b: 0.0,
            tap: 0.0,
        };
        let y = build_admittance(&[bus(1), bus(2)], &[br]).unwrap();
        let j10 = C64::new(0.0, 10.0);
        assert!((y.get(0, 0) + j10).norm() < 1e-12);
        assert!((y.get(1, 1) + j10).norm() < 1e-12);
        assert!((y.get(0, 1) - j10).norm() < 1e-12);
        assert!((y.get(1, 0) - j10).norm() < 1e-12);
    }

    #[test]
    fn no_branches_is_zero_matrix() {
        let y = build_admittance(&[bus(1), bus(2), bus(3)], &[]).unwrap();
        assert!(y.matrix().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn unknown_bus_rejected() {
        let br = Branch {
            from: 1,
            to: 9,
            r: 0.0,
            x: 0.1,
            b: 0.0,
            tap: 0.0,
        };
        assert!(build_admittance(&[bus(1), bus(2)], &[br]).is_err());
    }

    #[test]
    fn ieee39_symmetric_apart_from_taps() {
        let net = NetworkData::ieee39();
        let y = build_admittance(&net.buses, &net.branches).unwrap();
        assert_eq!(y.order(), 39);
        // The from/to transfer terms are symmetric even with taps here
        // since the ratio is real.
        for i in 0..39 {
            for j in 0..39 {
                assert!((y.get(i, j) - y.get(j, i)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn ieee39_row_sums_equal_branch_shunts() {
        // Independent accumulation of each branch's end-shunts (line charging
        // plus the tap-induced pi legs).
        let net = NetworkData::ieee39();
        let y = build_admittance(&net.buses, &net.branches).unwrap();
        let idx = net.bus_index();
        let mut expected = vec![C64::new(0.0, 0.0); 39];
        for br in &net.branches {
            let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
            let t = br.ratio();
            let jb2 = C64::new(0.0, br.b / 2.0);
            expected[idx[&br.from]] += ys * (1.0 / (t * t) - 1.0 / t) + jb2 / (t * t);
            expected[idx[&br.to]] += ys * (1.0 - 1.0 / t) + jb2;
        }
        for i in 0..39 {
            let row: C64 = (0..39).map(|j| y.get(i, j)).sum();
            assert!(
                (row - expected[i]).norm() < 1e-9,
                "bus {}: {row} vs {}",
                net.buses[i].id,
                expected[i]
            );
        }
    }
}
