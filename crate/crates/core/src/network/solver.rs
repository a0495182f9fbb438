use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::C64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AlgebraicOptions {
    /// Convergence threshold on the largest voltage update, pu.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Update size still accepted once `max_iterations` is reached; slow
    /// contraction near heavily loaded operating points lands here.
    pub accept: f64,
    /// Anderson mixing depth; 0 gives the plain iteration.
    pub depth: usize,
}

impl Default for AlgebraicOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 60,
            accept: 1e-8,
            depth: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlgebraicSolution {
    pub voltages: Vec<C64>,
    pub iterations: usize,
}

/// Factorized augmented admittance matrix. Devices enter as Norton
/// admittances (already inside the matrix) plus current injections.
#[derive(Debug, Clone)]
pub struct NetworkSolver {
    y: DMatrix<C64>,
    lu: LU<C64, Dyn, Dyn>,
}

impl NetworkSolver {
    pub fn new(y: DMatrix<C64>) -> Result<Self> {
        let n = y.nrows();
        for i in 0..n {
            if (0..n).all(|j| y[(i, j)].norm() == 0.0) {
                return Err(Error::Singular(format!("bus index {i} is isolated")));
            }
        }
        let lu = y.clone().lu();
        let u = lu.u();
        let max_pivot = (0..n).map(|i| u[(i, i)].norm()).fold(0.0, f64::max);
        let min_pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        if n > 0 && !(min_pivot > 1e-12 * max_pivot) {
            return Err(Error::Singular(format!(
                "pivot ratio {:.3e} (islanded subnetwork without a source path?)",
                min_pivot / max_pivot
            )));
        }
        Ok(Self { y, lu })
    }

    pub fn order(&self) -> usize {
        self.y.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.y
    }

    pub fn solve_linear(&self, currents: &[C64]) -> Vec<C64> {
        let b = DVector::from_column_slice(currents);
        self.lu
            .solve(&b)
            .expect("factorization checked nonsingular")
            .iter()
            .copied()
            .collect()
    }

    /// Solves `Y V = I(V)` by fixed-point iteration on the voltage-dependent
    /// injections, starting from `guess`. With `opts.depth > 0` the plain
    /// map is Anderson-accelerated over the last `depth` iterates.
    pub fn solve_with<F>(&self, guess: &[C64], opts: &AlgebraicOptions, mut injections: F) -> Result<AlgebraicSolution>
    where
        F: FnMut(&[C64], &mut [C64]),
    {
        let n = self.order();
        let mut v = guess.to_vec();
        let mut current = vec![C64::new(0.0, 0.0); n];
        let mut residual = f64::INFINITY;
        let mut history = Anderson::new(2 * n, opts.depth);
        for iteration in 1..=opts.max_iterations {
            current.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
            injections(&v, &mut current);
            let mapped = self.solve_linear(&current);
            residual = mapped
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            if !residual.is_finite() {
                break;
            }
            if residual < opts.tolerance {
                return Ok(AlgebraicSolution {
                    voltages: mapped,
                    iterations: iteration,
                });
            }
            v = history.next(&v, &mapped);
        }
        if residual < opts.accept {
            return Ok(AlgebraicSolution {
                voltages: v,
                iterations: opts.max_iterations,
            });
        }
        Err(Error::NetworkDivergence {
            iterations: opts.max_iterations,
            residual,
        })
    }
}

/// Anderson mixing on real-stacked voltage vectors.
struct Anderson {
    depth: usize,
    prev: Option<(DVector<f64>, DVector<f64>)>,
    d_g: Vec<DVector<f64>>,
    d_f: Vec<DVector<f64>>,
    dim: usize,
}

impl Anderson {
    fn new(dim: usize, depth: usize) -> Self {
        Self { depth, prev: None, d_g: Vec::new(), d_f: Vec::new(), dim }
    }

    fn stack(v: &[C64]) -> DVector<f64> {
        DVector::from_iterator(v.len() * 2, v.iter().flat_map(|c| [c.re, c.im]))
    }

    /// Next iterate given the current one and its image under the map.
    fn next(&mut self, v: &[C64], mapped: &[C64]) -> Vec<C64> {
        if self.depth == 0 {
            return mapped.to_vec();
        }
        let g = Self::stack(mapped);
        let f = &g - Self::stack(v);
        if let Some((g0, f0)) = self.prev.take() {
            if self.d_g.len() == self.depth {
                self.d_g.remove(0);
                self.d_f.remove(0);
            }
            self.d_g.push(&g - g0);
            self.d_f.push(&f - f0);
        }
        let mut out = g.clone();
        if !self.d_f.is_empty() {
            let m = self.d_f.len();
            let df = DMatrix::from_columns(&self.d_f);
            if let Ok(gamma) = df.clone().svd(true, true).solve(&f, 1e-12) {
                if gamma.iter().all(|x| x.is_finite()) {
                    for k in 0..m {
                        out -= &self.d_g[k] * gamma[k];
                    }
                }
            }
        }
        self.prev = Some((g, f));
        debug_assert_eq!(out.len(), self.dim);
        (0..self.dim / 2).map(|i| C64::new(out[2 * i], out[2 * i + 1])).collect()
    }
}

/// One-shot convenience wrapper around [`NetworkSolver`].
pub fn solve_network_algebraic<F>(y: &DMatrix<C64>, guess: &[C64], injections: F) -> Result<Vec<C64>>
where
    F: FnMut(&[C64], &mut [C64]),
{
    let solver = NetworkSolver::new(y.clone())?;
    Ok(solver
        .solve_with(guess, &AlgebraicOptions::default(), injections)?
        .voltages)
}
