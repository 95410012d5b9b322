use crate::error::{Error, Result};
use crate::linalg::DenseMat;

/// Dense Cholesky factorization `S = LLᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: DenseMat,
}

impl Cholesky {
    pub fn factor(s: &DenseMat) -> Result<Self> {
        if !s.is_square() {
            return Err(Error::DimensionMismatch {
                expected: s.rows(),
                got: s.cols(),
            });
        }
        let n = s.rows();
        let mut l = DenseMat::zeros(n, n);
        for j in 0..n {
            let mut d = s[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite(format!(
                    "pivot {j} of the Cholesky factorization is {d:e}"
                )));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut v = s[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = v / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn l(&self) -> &DenseMat {
        &self.l
    }

    pub fn n(&self) -> usize {
        self.l.rows()
    }

    /// Solves `Ly = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= self.l[(i, k)] * b[k];
            }
            b[i] = v / self.l[(i, i)];
        }
    }

    /// Solves `Lᵀx = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.n();
        for i in (0..n).rev() {
            let col = self.l.col(i);
            let mut v = b[i];
            for k in (i + 1)..n {
                v -= col[k] * b[k];
            }
            b[i] = v / col[i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        Ok(x)
    }

    /// `L⁻¹S L⁻ᵀ` for symmetric `S`.
    pub fn congruence_inverse(&self, s: &DenseMat) -> Result<DenseMat> {
        let n = self.n();
        if s.rows() != n || s.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.rows(),
            });
        }
        // W = L⁻¹S, then C = L⁻¹Wᵀ = L⁻¹SL⁻ᵀ.
        let mut w = s.clone();
        for j in 0..n {
            self.solve_lower_in_place(w.col_mut(j));
        }
        let mut c = w.transpose();
        for j in 0..n {
            self.solve_lower_in_place(c.col_mut(j));
        }
        c.symmetrize_internal();
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 6;
        let mut s = DenseMat::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = 2.0;
            if i + 1 < n {
                s[(i, i + 1)] = -1.0;
                s[(i + 1, i)] = -1.0;
            }
        }
        let ch = Cholesky::factor(&s).unwrap();
        let x = ch.solve(&[1.0; 6]).unwrap();
        // Continuous analogue u(1-u)/2 sampled: x_i = i(n+1-i)/2.
        for (i, xi) in x.iter().enumerate() {
            let k = (i + 1) as f64;
            assert!((xi - k * (7.0 - k) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let s = DenseMat::from_row_major(2, 2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(Cholesky::factor(&s), Err(Error::NotPositiveDefinite(_))));
    }
}
