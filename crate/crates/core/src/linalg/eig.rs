//! Dense symmetric eigensolver: Householder tridiagonalization followed by the
//! implicit QL algorithm (the classical `tred2`/`tql2` pair).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, DenseMat};

/// Largest dimension accepted by the dense routines unless overridden.
pub const DEFAULT_DENSE_LIMIT: usize = 2048;

/// Relative asymmetry accepted by [`dense_sym_eig`].
pub const EIG_SYMMETRY_TOL: f64 = 1e-12;

const MAX_QL_SWEEPS: usize = 60;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenseEigResult {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, orthonormal (or `M`-orthonormal for the
    /// generalized problem), largest-magnitude entry positive.
    pub vectors: DenseMat,
}

fn check_input(s: &DenseMat, limit: usize) -> Result<()> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch {
            expected: s.rows(),
            got: s.cols(),
        });
    }
    if s.rows() > limit {
        return Err(Error::DenseLimit {
            n: s.rows(),
            limit,
        });
    }
    let norm = s.max_abs();
    let tol = EIG_SYMMETRY_TOL * norm;
    let n = s.rows();
    for j in 0..n {
        for i in (j + 1)..n {
            let diff = (s[(i, j)] - s[(j, i)]).abs();
            if diff > tol {
                return Err(Error::Asymmetric {
                    row: i,
                    col: j,
                    diff,
                    tol,
                });
            }
        }
    }
    if s.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix contains non-finite entries"));
    }
    Ok(())
}

/// Householder reduction to tridiagonal form. On entry `v` holds `S` in
/// row-major order. Returns diagonal `d` and subdiagonal `e` (with `e[0] = 0`);
/// with `accumulate`, `v` is overwritten by the orthogonal transformation.
fn tred2(n: usize, v: &mut [f64], accumulate: bool) -> (Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    if !accumulate {
        // The reduced diagonal is left on the diagonal of the work array.
        for (i, di) in d.iter_mut().enumerate() {
            *di = v[idx(i, i)];
        }
        e[0] = 0.0;
        return (d, e);
    }

    for i in 0..n.saturating_sub(1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
    (d, e)
}

/// Implicit QL on the tridiagonal `(d, e)`. With `z = Some(w)`, `w` holds the
/// accumulated transformation stored by columns (`w[i*n + k]` is entry `k` of
/// column `i`) and is updated with the rotations.
fn tql2(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(Error::NoConvergence {
                        iterations: sweeps,
                        residual: e[l].abs(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(w) = z.as_deref_mut() {
                        let (lo, hi) = w.split_at_mut((i + 1) * n);
                        let ci = &mut lo[i * n..];
                        let ci1 = &mut hi[..n];
                        for (a, b) in ci.iter_mut().zip(ci1.iter_mut()) {
                            let t = *b;
                            *b = s * *a + c * t;
                            *a = c * *a - s * t;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn row_major(s: &DenseMat) -> Vec<f64> {
    let n = s.rows();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = s[(i, j)];
        }
    }
    v
}

/// Flips each column so that its largest-magnitude entry is positive.
pub(crate) fn fix_signs(x: &mut DenseMat) {
    for j in 0..x.cols() {
        let col = x.col(j);
        let mut best = 0usize;
        for (i, v) in col.iter().enumerate() {
            // Ties go to the first index, which keeps the choice deterministic.
            if v.abs() > col[best].abs() * (1.0 + 1e-12) {
                best = i;
            }
        }
        if col.get(best).copied().unwrap_or(0.0) < 0.0 {
            x.scale_column(j, -1.0);
        }
    }
}

/// Full eigendecomposition of a symmetric matrix.
pub fn dense_sym_eig(s: &DenseMat) -> Result<DenseEigResult> {
    dense_sym_eig_with_limit(s, DEFAULT_DENSE_LIMIT)
}

pub fn dense_sym_eig_with_limit(s: &DenseMat, limit: usize) -> Result<DenseEigResult> {
    check_input(s, limit)?;
    let n = s.rows();
    if n == 0 {
        return Ok(DenseEigResult {
            values: Vec::new(),
            vectors: DenseMat::zeros(0, 0),
        });
    }
    let mut v = row_major(s);
    let (mut d, mut e) = tred2(n, &mut v, true);
    // Column storage makes every rotation touch two contiguous slices.
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            w[i * n + k] = v[k * n + i];
        }
    }
    tql2(&mut d, &mut e, Some(&mut w))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut data = Vec::with_capacity(n * n);
    for &i in &order {
        data.extend_from_slice(&w[i * n..(i + 1) * n]);
    }
    let mut vectors = DenseMat::from_col_major(n, n, data)?;
    fix_signs(&mut vectors);
    Ok(DenseEigResult { values, vectors })
}

/// Ascending eigenvalues only (no eigenvector accumulation).
pub fn dense_sym_eigvals(s: &DenseMat) -> Result<Vec<f64>> {
    check_input(s, DEFAULT_DENSE_LIMIT)?;
    let n = s.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut v = row_major(s);
    let (mut d, mut e) = tred2(n, &mut v, false);
    tql2(&mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Generalized problem `Ax = λMx` with `M` SPD. Vectors are `M`-orthonormal.
pub fn dense_gen_eig(a: &DenseMat, m: &DenseMat) -> Result<DenseEigResult> {
    check_input(a, DEFAULT_DENSE_LIMIT)?;
    check_input(m, DEFAULT_DENSE_LIMIT)?;
    if a.rows() != m.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: m.rows(),
        });
    }
    let ch = Cholesky::factor(m)
        .map_err(|_| Error::RankDeficient("mass matrix is numerically singular".into()))?;
    let c = ch.congruence_inverse(a)?;
    let mut res = dense_sym_eig(&c)?;
    for j in 0..res.vectors.cols() {
        ch.solve_upper_in_place(res.vectors.col_mut(j));
    }
    fix_signs(&mut res.vectors);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(s: &DenseMat, r: &DenseEigResult) -> f64 {
        let sx = s.matmul(&r.vectors).unwrap();
        let mut worst = 0.0f64;
        for j in 0..s.cols() {
            for i in 0..s.rows() {
                worst = worst.max((sx[(i, j)] - r.values[j] * r.vectors[(i, j)]).abs());
            }
        }
        worst
    }

    #[test]
    fn diagonal_gives_permuted_identity() {
        let s = DenseMat::from_diagonal(&[3.0, 1.0, 2.0]);
        let r = dense_sym_eig(&s).unwrap();
        assert_eq!(r.values, vec![1.0, 2.0, 3.0]);
        let expect = [1usize, 2, 0];
        for (j, &row) in expect.iter().enumerate() {
            for i in 0..3 {
                let target = if i == row { 1.0 } else { 0.0 };
                assert!((r.vectors[(i, j)] - target).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_by_two() {
        let s = DenseMat::from_row_major(2, 2, &[2.0, -1.0, -1.0, 2.0]).unwrap();
        let r = dense_sym_eig(&s).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-14);
        assert!((r.values[1] - 3.0).abs() < 1e-14);
        assert!(residual(&s, &r) < 1e-14);
    }

    #[test]
    fn identity_spectrum() {
        let r = dense_sym_eig(&DenseMat::identity(5)).unwrap();
        assert!(r.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn laplacian_matches_closed_form() {
        let n = 40;
        let mut s = DenseMat::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = 2.0;
            if i + 1 < n {
                s[(i, i + 1)] = -1.0;
                s[(i + 1, i)] = -1.0;
            }
        }
        let r = dense_sym_eig(&s).unwrap();
        for (j, &v) in r.values.iter().enumerate() {
            let theta = (j + 1) as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64);
            assert!((v - 4.0 * theta.sin().powi(2)).abs() < 1e-13);
        }
        assert!(residual(&s, &r) < 1e-12 * 4.0);
        let vals = dense_sym_eigvals(&s).unwrap();
        for (a, b) in vals.iter().zip(&r.values) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let s = DenseMat::from_row_major(2, 2, &[1.0, 0.0, 1e-6, 1.0]).unwrap();
        assert!(matches!(dense_sym_eig(&s), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn dense_limit_enforced() {
        let s = DenseMat::identity(5);
        assert!(matches!(
            dense_sym_eig_with_limit(&s, 4),
            Err(Error::DenseLimit { n: 5, limit: 4 })
        ));
    }

    #[test]
    fn generalized_vectors_are_mass_orthonormal() {
        let a = DenseMat::from_row_major(3, 3, &[4.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 4.0])
            .unwrap();
        let m = DenseMat::from_row_major(3, 3, &[2.0, 0.5, 0.0, 0.5, 2.0, 0.5, 0.0, 0.5, 2.0])
            .unwrap();
        let r = dense_gen_eig(&a, &m).unwrap();
        let g = r.vectors.t_matmul(&m.matmul(&r.vectors).unwrap()).unwrap();
        assert!(g.identity_defect() < 1e-14);
        let ax = a.matmul(&r.vectors).unwrap();
        let mx = m.matmul(&r.vectors).unwrap();
        for j in 0..3 {
            for i in 0..3 {
                assert!((ax[(i, j)] - r.values[j] * mx[(i, j)]).abs() < 1e-13);
            }
        }
    }
}
