//! V-cycle shared by the geometric and algebraic hierarchies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, sub, Cholesky, CsrMatrix, LinearSolver, SparseSymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoother {
    /// Forward sweeps before, backward sweeps after the coarse correction.
    GaussSeidel,
    /// Damped Jacobi with the given weight.
    Jacobi(f64),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CycleParams {
    pub pre: usize,
    pub post: usize,
    pub smoother: Smoother,
    /// Scaling of the coarse-grid correction (1 is the textbook cycle).
    pub coarse_weight: f64,
    pub tol: f64,
    pub max_cycles: usize,
}

impl Default for CycleParams {
    fn default() -> Self {
        CycleParams {
            pre: 2,
            post: 2,
            smoother: Smoother::GaussSeidel,
            coarse_weight: 1.0,
            tol: 1e-12,
            max_cycles: 200,
        }
    }
}

/// Operators fine to coarse, with `prolongations[l]` mapping level `l + 1` to level `l`.
#[derive(Clone, Debug)]
pub struct Multigrid {
    ops: Vec<SparseSymMatrix>,
    prolongations: Vec<CsrMatrix>,
    restrictions: Vec<CsrMatrix>,
    coarse: Cholesky,
    params: CycleParams,
}

impl Multigrid {
    pub fn new(ops: Vec<SparseSymMatrix>, prolongations: Vec<CsrMatrix>, params: CycleParams) -> Result<Self> {
        if ops.is_empty() || prolongations.len() + 1 != ops.len() {
            return Err(Error::invalid("need one prolongation between each pair of levels"));
        }
        for (l, p) in prolongations.iter().enumerate() {
            if p.nrows() != ops[l].n() || p.ncols() != ops[l + 1].n() {
                return Err(Error::invalid(format!("prolongation {l} has the wrong shape")));
            }
        }
        if let Some(i) = ops
            .iter()
            .flat_map(|a| a.diag())
            .position(|d| !(d > 0.0))
        {
            return Err(Error::NotPositiveDefinite(format!("nonpositive diagonal entry {i}")));
        }
        let coarse = Cholesky::factor(&ops.last().unwrap().to_dense())?;
        let restrictions = prolongations.iter().map(|p| p.transpose()).collect();
        Ok(Multigrid {
            ops,
            prolongations,
            restrictions,
            coarse,
            params,
        })
    }

    pub fn levels(&self) -> usize {
        self.ops.len()
    }

    pub fn params(&self) -> &CycleParams {
        &self.params
    }

    fn smooth(&self, l: usize, b: &[f64], x: &mut [f64], sweeps: usize, backward: bool) {
        let a = self.ops[l].csr();
        let n = b.len();
        match self.params.smoother {
            Smoother::GaussSeidel => {
                for _ in 0..sweeps {
                    let mut step = |i: usize| {
                        let (cols, vals) = a.row(i);
                        let mut s = b[i];
                        let mut d = 0.0;
                        for (&c, &v) in cols.iter().zip(vals) {
                            if c == i {
                                d = v;
                            } else {
                                s -= v * x[c];
                            }
                        }
                        x[i] = s / d;
                    };
                    if backward {
                        (0..n).rev().for_each(&mut step);
                    } else {
                        (0..n).for_each(&mut step);
                    }
                }
            }
            Smoother::Jacobi(w) => {
                let mut ax = vec![0.0; n];
                for _ in 0..sweeps {
                    a.matvec_into(x, &mut ax).expect("sizes checked at construction");
                    for i in 0..n {
                        x[i] += w * (b[i] - ax[i]) / a.get(i, i);
                    }
                }
            }
        }
    }

    fn cycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        if l + 1 == self.ops.len() {
            let sol = self.coarse.solve(b).expect("coarse size checked");
            x.copy_from_slice(&sol);
            return;
        }
        self.smooth(l, b, x, self.params.pre, false);
        let ax = self.ops[l].spmv(x).expect("sizes checked");
        let r = sub(b, &ax);
        let rc = self.restrictions[l].matvec(&r).expect("sizes checked");
        let mut ec = vec![0.0; rc.len()];
        self.cycle(l + 1, &rc, &mut ec);
        let e = self.prolongations[l].matvec(&ec).expect("sizes checked");
        let w = self.params.coarse_weight;
        for (xi, ei) in x.iter_mut().zip(&e) {
            *xi += w * ei;
        }
        self.smooth(l, b, x, self.params.post, true);
    }

    /// One V-cycle on the finest level, in place.
    pub fn vcycle(&self, b: &[f64], x: &mut [f64]) -> Result<()> {
        let n = self.ops[0].n();
        if b.len() != n || x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        self.cycle(0, b, x);
        Ok(())
    }

    /// Repeats cycles from `x = 0` until `‖b − Ax‖₂ ≤ tol‖b‖₂`; also returns
    /// the relative residual after every cycle.
    pub fn solve_with_history(&self, b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.ops[0].n();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let bn = norm2(b);
        let mut x = vec![0.0; n];
        if bn == 0.0 {
            return Ok((x, Vec::new()));
        }
        let mut hist = Vec::new();
        for _ in 0..self.params.max_cycles {
            self.cycle(0, b, &mut x);
            let r = norm2(&sub(b, &self.ops[0].spmv(&x)?)) / bn;
            hist.push(r);
            if r <= self.params.tol {
                return Ok((x, hist));
            }
            if !r.is_finite() {
                break;
            }
        }
        Err(Error::MultigridNoConvergence {
            cycles: hist.len(),
            residual: hist.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// Geometric-mean residual contraction per cycle on `b`, over `cycles` cycles.
    pub fn contraction(&self, b: &[f64], cycles: usize) -> Result<f64> {
        let n = self.ops[0].n();
        let mut x = vec![0.0; n];
        let r0 = norm2(b);
        let mut r = r0;
        for _ in 0..cycles {
            self.cycle(0, b, &mut x);
            r = norm2(&sub(b, &self.ops[0].spmv(&x)?));
        }
        Ok((r / r0).powf(1.0 / cycles as f64))
    }
}

impl LinearSolver for Multigrid {
    fn dim(&self) -> usize {
        self.ops[0].n()
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_with_history(b).map(|(x, _)| x)
    }

    fn name(&self) -> &'static str {
        "multigrid"
    }
}
