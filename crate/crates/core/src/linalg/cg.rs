use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, SparseSymMatrix};

/// Default relative residual tolerance for inner solves.
pub const DEFAULT_CG_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: DEFAULT_CG_TOL,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b − Ax‖₂ / ‖b‖₂` recomputed from the returned iterate.
    pub relative_residual: f64,
}

/// `precond(r, z)` writes `z ≈ A⁻¹r`.
pub type Preconditioner<'a> = &'a dyn Fn(&[f64], &mut [f64]);

/// Preconditioned conjugate gradients for SPD `A`.
///
/// `precond(r, z)` must apply an SPD approximation of `A⁻¹`.
pub fn cg_solve(
    a: &SparseSymMatrix,
    b: &[f64],
    opts: CgOptions,
    precond: Option<Preconditioner<'_>>,
) -> Result<CgSolution> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("CG tolerance must be positive"));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let apply = |r: &[f64], z: &mut [f64]| match precond {
        Some(p) => p(r, z),
        None => z.copy_from_slice(r),
    };
    apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let target = opts.tol * bnorm;

    for it in 1..=opts.max_iter {
        a.spmv_into(&p, &mut ap)?;
        let curv = dot(&p, &ap);
        if !(curv > 0.0) {
            return Err(Error::Breakdown(curv));
        }
        let alpha = rz / curv;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if norm2(&r) <= target {
            // Confirm against the true residual; recursion drift can fool the test.
            let ax = a.spmv(&x)?;
            let true_res = norm2(&crate::linalg::sub(b, &ax));
            if true_res <= target {
                return Ok(CgSolution {
                    x,
                    iterations: it,
                    relative_residual: true_res / bnorm,
                });
            }
            r = crate::linalg::sub(b, &ax);
        }
        apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    let ax = a.spmv(&x)?;
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: norm2(&crate::linalg::sub(b, &ax)) / bnorm,
    })
}

/// Solver for `Ax = b` with a fixed operator; implementations must be
/// deterministic and shareable across threads.
pub trait LinearSolver: Send + Sync {
    fn dim(&self) -> usize;
    fn solve(&self, b: &[f64]) -> Result<Vec<f64>>;
    fn name(&self) -> &'static str;
}

/// Jacobi-preconditioned CG.
pub struct CgSolver<'a> {
    a: &'a SparseSymMatrix,
    inv_diag: Vec<f64>,
    opts: CgOptions,
}

impl<'a> CgSolver<'a> {
    pub fn new(a: &'a SparseSymMatrix, opts: CgOptions) -> Result<Self> {
        let diag = a.diag();
        if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::NotPositiveDefinite(format!(
                "diagonal entry {i} is {}",
                diag[i]
            )));
        }
        Ok(CgSolver {
            a,
            inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
            opts,
        })
    }
}

impl LinearSolver for CgSolver<'_> {
    fn dim(&self) -> usize {
        self.a.n()
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let jacobi = |r: &[f64], z: &mut [f64]| {
            for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
                *zi = ri * di;
            }
        };
        cg_solve(self.a, b, self.opts, Some(&jacobi)).map(|s| s.x)
    }

    fn name(&self) -> &'static str {
        "cg"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Cholesky;

    fn tridiag(n: usize) -> SparseSymMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseSymMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn identity_and_diagonal() {
        let x = cg_solve(&SparseSymMatrix::identity(2), &[3.0, 4.0], CgOptions::default(), None)
            .unwrap()
            .x;
        assert!((x[0] - 3.0).abs() < 1e-14 && (x[1] - 4.0).abs() < 1e-14);
        let d = SparseSymMatrix::diagonal(&[1.0, 2.0, 4.0]);
        let x = cg_solve(&d, &[1.0, 2.0, 4.0], CgOptions::default(), None).unwrap().x;
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn laplacian_matches_dense_factorization() {
        let a = tridiag(100);
        let b = vec![1.0; 100];
        let sol = cg_solve(&a, &b, CgOptions::default(), None).unwrap();
        assert!(sol.relative_residual <= 1e-12);
        let exact = Cholesky::factor(&a.to_dense()).unwrap().solve(&b).unwrap();
        let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, e) in sol.x.iter().zip(&exact) {
            assert!((x - e).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn indefinite_operator_breaks_down() {
        let d = SparseSymMatrix::diagonal(&[1.0, -1.0]);
        assert!(matches!(
            cg_solve(&d, &[0.0, 1.0], CgOptions::default(), None),
            Err(Error::Breakdown(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let a = tridiag(50);
        let opts = CgOptions {
            tol: 1e-12,
            max_iter: 3,
        };
        assert!(matches!(
            cg_solve(&a, &vec![1.0; 50], opts, None),
            Err(Error::NoConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn jacobi_solver_agrees() {
        let a = tridiag(30).scaled(7.0);
        let s = CgSolver::new(&a, CgOptions::default()).unwrap();
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let x = s.solve(&b).unwrap();
        let r = crate::linalg::sub(&b, &a.spmv(&x).unwrap());
        assert!(norm2(&r) <= 1e-12 * norm2(&b));
    }
}
