//! Compressed sparse row storage.
//!
//! [`CsrMatrix`] is a general rectangular matrix (prolongations, restriction
//! products). [`SparseSymMatrix`] wraps a square CSR matrix whose full
//! symmetric pattern is stored and whose numerical symmetry has been checked.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, DenseMat};

/// Relative tolerance of the numerical symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-14;

/// Row count above which sparse products are computed in parallel.
const PAR_ROWS: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros produced by cancellation are kept.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::invalid(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }

        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.iter().peekable();
            while let Some(&(c, mut v)) = iter.next() {
                while let Some(&&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Validated construction from raw CSR arrays (column indices sorted per row).
    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 || row_offsets[0] != 0 {
            return Err(Error::invalid("row_offsets must have length nrows + 1 and start at 0"));
        }
        if col_indices.len() != values.len() || *row_offsets.last().unwrap() != values.len() {
            return Err(Error::invalid("CSR array lengths are inconsistent"));
        }
        for i in 0..nrows {
            if row_offsets[i] > row_offsets[i + 1] {
                return Err(Error::invalid("row_offsets must be nondecreasing"));
            }
            let cols = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= ncols) {
                return Err(Error::invalid(format!("row {i} has unsorted or out-of-range columns")));
            }
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(d: &DenseMat) -> Self {
        let mut t = Vec::new();
        for i in 0..d.rows() {
            for j in 0..d.cols() {
                if d[(i, j)] != 0.0 {
                    t.push((i, j, d[(i, j)]));
                }
            }
        }
        Self::from_triplets(d.rows(), d.cols(), &t).expect("indices in range")
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
    }

    /// `y = self * x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                got: x.len(),
            });
        }
        if y.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                got: y.len(),
            });
        }
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = self.row_dot(i, x));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row_dot(i, x);
            }
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    /// `selfᵀ * x`.
    pub fn t_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                col_indices[next[c]] = i;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        // Rows of the transpose are filled in increasing source-row order, so
        // column indices are already sorted.
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    /// Sparse product `self * other` (row-by-row accumulation).
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                got: other.nrows,
            });
        }
        let mut acc = vec![0.0; other.ncols];
        let mut marker = vec![usize::MAX; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_offsets = Vec::with_capacity(self.nrows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..self.nrows {
            touched.clear();
            let (ac, av) = self.row(i);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k);
                for (&j, &b) in bc.iter().zip(bv) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_indices.push(j);
                values.push(acc[j]);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix {
            nrows: self.nrows,
            ncols: other.ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn to_dense(&self) -> DenseMat {
        let mut d = DenseMat::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                d[(i, c)] = v;
            }
        }
        d
    }

    /// Dense copy of the columns, one `Vec` per column.
    pub fn dense_columns(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.nrows]; self.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c][i] = v;
            }
        }
        out
    }

    /// Largest asymmetry `|a_ij − a_ji|` over the stored pattern with its location.
    fn worst_asymmetry(&self) -> (usize, usize, f64) {
        let mut worst = (0, 0, 0.0f64);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            // Visiting every stored entry catches values present on one side only.
            for (&j, &v) in cols.iter().zip(vals) {
                let d = (v - self.get(j, i)).abs();
                if d > worst.2 {
                    worst = (i, j, d);
                }
            }
        }
        worst
    }
}

/// Square CSR matrix with a verified symmetric pattern and values.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    csr: CsrMatrix,
    spd: bool,
}

impl SparseSymMatrix {
    /// Wraps a square CSR matrix after checking
    /// `|a_ij − a_ji| ≤ 1e−14·max|a|` on every stored entry.
    pub fn new(csr: CsrMatrix) -> Result<Self> {
        if csr.nrows != csr.ncols {
            return Err(Error::DimensionMismatch {
                expected: csr.nrows,
                got: csr.ncols,
            });
        }
        let tol = SYMMETRY_TOL * csr.max_abs();
        let (row, col, diff) = csr.worst_asymmetry();
        if diff > tol {
            return Err(Error::Asymmetric { row, col, diff, tol });
        }
        Ok(SparseSymMatrix { csr, spd: false })
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        Self::new(CsrMatrix::from_triplets(n, n, triplets)?)
    }

    pub fn from_dense(d: &DenseMat) -> Result<Self> {
        if !d.is_square() {
            return Err(Error::DimensionMismatch {
                expected: d.rows(),
                got: d.cols(),
            });
        }
        Self::new(CsrMatrix::from_dense(d))
    }

    pub fn identity(n: usize) -> Self {
        SparseSymMatrix {
            csr: CsrMatrix::identity(n),
            spd: true,
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let csr = CsrMatrix {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
        };
        let spd = diag.iter().all(|&d| d > 0.0);
        SparseSymMatrix { csr, spd }
    }

    pub fn zeros(n: usize) -> Self {
        SparseSymMatrix {
            csr: CsrMatrix {
                nrows: n,
                ncols: n,
                row_offsets: vec![0; n + 1],
                col_indices: Vec::new(),
                values: Vec::new(),
            },
            spd: false,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.csr.nrows
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.csr.get(i, j)
    }

    pub fn diag(&self) -> Vec<f64> {
        self.csr.diagonal()
    }

    pub fn max_abs(&self) -> f64 {
        self.csr.max_abs()
    }

    pub fn is_spd_certified(&self) -> bool {
        self.spd
    }

    /// Certifies positive definiteness with a dense Cholesky factorization.
    pub fn certify_spd(mut self, dense_limit: usize) -> Result<Self> {
        if self.n() > dense_limit {
            return Err(Error::DenseLimit {
                n: self.n(),
                limit: dense_limit,
            });
        }
        Cholesky::factor(&self.to_dense())?;
        self.spd = true;
        Ok(self)
    }

    /// Marks the matrix SPD on the caller's word (used for large assembled operators).
    pub fn attest_spd(mut self) -> Self {
        self.spd = true;
        self
    }

    /// `Ax`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.csr.matvec(x)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.csr.matvec_into(x, y)
    }

    pub fn to_dense(&self) -> DenseMat {
        self.csr.to_dense()
    }

    /// `AV` for a dense block of columns.
    pub fn apply_dense(&self, v: &DenseMat) -> Result<DenseMat> {
        let cols: Result<Vec<Vec<f64>>> = v.columns().map(|c| self.spmv(c)).collect();
        DenseMat::from_columns(self.n(), &cols?)
    }

    /// Galerkin triple product `PᵀAP`.
    pub fn galerkin(&self, p: &CsrMatrix) -> Result<SparseSymMatrix> {
        if p.nrows() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: p.nrows(),
            });
        }
        let ap = self.csr.matmul(p)?;
        let c = p.transpose().matmul(&ap)?;
        let mut out = SparseSymMatrix::new(c)?;
        out.spd = self.spd;
        Ok(out)
    }

    /// `sA`.
    pub fn scaled(&self, s: f64) -> SparseSymMatrix {
        let mut csr = self.csr.clone();
        for v in &mut csr.values {
            *v *= s;
        }
        SparseSymMatrix {
            csr,
            spd: self.spd && s > 0.0,
        }
    }

    /// `‖Ā − B̄‖_max` over the union pattern.
    pub fn max_abs_diff(&self, other: &SparseSymMatrix) -> Result<f64> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: other.n(),
            });
        }
        let mut worst = 0.0f64;
        for i in 0..self.n() {
            let (c1, v1) = self.csr.row(i);
            for (&j, &v) in c1.iter().zip(v1) {
                worst = worst.max((v - other.get(i, j)).abs());
            }
            let (c2, v2) = other.csr.row(i);
            for (&j, &v) in c2.iter().zip(v2) {
                worst = worst.max((v - self.get(i, j)).abs());
            }
        }
        Ok(worst)
    }
}
