use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMat, GramMetric, Metric};

/// Default relative drop tolerance of [`orthonormalize`].
pub const DROP_TOL: f64 = 1e-10;

/// Maximum accepted `‖VᵀGV − I‖_max` for a [`Basis`].
pub const ORTHONORMALITY_TOL: f64 = 1e-12;

/// Column basis orthonormal in a recorded metric.
#[derive(Clone, Debug)]
pub struct Basis {
    columns: DenseMat,
    gram_metric: GramMetric,
    orthonormality_tol: f64,
}

impl Basis {
    /// Wraps columns that are already orthonormal in `metric`, after checking.
    pub fn from_orthonormal(columns: DenseMat, metric: Metric<'_>) -> Result<Self> {
        let b = Basis {
            columns,
            gram_metric: metric.tag(),
            orthonormality_tol: ORTHONORMALITY_TOL,
        };
        let defect = b.gram_defect(metric)?;
        if defect > b.orthonormality_tol {
            return Err(Error::RankDeficient(format!(
                "columns are not {}-orthonormal: defect {defect:e}",
                metric.tag().name()
            )));
        }
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.columns.cols()
    }

    pub fn n(&self) -> usize {
        self.columns.rows()
    }

    pub fn columns(&self) -> &DenseMat {
        &self.columns
    }

    pub fn into_columns(self) -> DenseMat {
        self.columns
    }

    pub fn col(&self, j: usize) -> &[f64] {
        self.columns.col(j)
    }

    pub fn gram_metric(&self) -> GramMetric {
        self.gram_metric
    }

    pub fn orthonormality_tol(&self) -> f64 {
        self.orthonormality_tol
    }

    /// `‖VᵀGV − I‖_max` measured in `metric`.
    pub fn gram_defect(&self, metric: Metric<'_>) -> Result<f64> {
        let gv: Result<Vec<Vec<f64>>> = self.columns.columns().map(|c| metric.apply(c)).collect();
        let gv = DenseMat::from_columns(self.n(), &gv?)?;
        Ok(self.columns.t_matmul(&gv)?.identity_defect())
    }
}

/// Modified Gram–Schmidt with one full re-orthogonalization pass. Columns
/// whose residual falls below `drop_tol` times their original norm are dropped.
pub fn orthonormalize(w: &DenseMat, metric: Metric<'_>, drop_tol: f64) -> Result<Basis> {
    if let Some(g) = metric.matrix() {
        if g.n() != w.rows() {
            return Err(Error::DimensionMismatch {
                expected: g.n(),
                got: w.rows(),
            });
        }
    }
    let basis = gram_schmidt(w, metric, drop_tol)?;
    let defect = basis.gram_defect(metric)?;
    if defect <= ORTHONORMALITY_TOL {
        return Ok(basis);
    }
    // A third pass recovers the rare case of severe cancellation.
    let again = gram_schmidt(basis.columns(), metric, drop_tol)?;
    let defect = again.gram_defect(metric)?;
    if defect > ORTHONORMALITY_TOL {
        return Err(Error::RankDeficient(format!(
            "orthonormalization lost orthogonality: defect {defect:e}"
        )));
    }
    Ok(again)
}

fn gram_schmidt(w: &DenseMat, metric: Metric<'_>, drop_tol: f64) -> Result<Basis> {
    let n = w.rows();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut gq: Vec<Vec<f64>> = Vec::new();
    for col in w.columns() {
        let mut v = col.to_vec();
        let gv0 = metric.apply(&v)?;
        let norm0 = dot(&v, &gv0);
        if norm0 < 0.0 {
            return Err(Error::NegativeNorm(norm0));
        }
        let norm0 = norm0.sqrt();
        if norm0 == 0.0 || !norm0.is_finite() {
            continue;
        }
        for _pass in 0..2 {
            for (qi, gqi) in q.iter().zip(&gq) {
                let c = dot(gqi, &v);
                for (vk, qk) in v.iter_mut().zip(qi) {
                    *vk -= c * qk;
                }
            }
        }
        let gv = metric.apply(&v)?;
        let nrm2 = dot(&v, &gv);
        let nrm = nrm2.max(0.0).sqrt();
        if nrm < drop_tol * norm0 {
            continue;
        }
        q.push(v.iter().map(|x| x / nrm).collect());
        gq.push(gv.iter().map(|x| x / nrm).collect());
    }
    if q.is_empty() {
        return Err(Error::EmptyBasis);
    }
    Ok(Basis {
        columns: DenseMat::from_columns(n, &q)?,
        gram_metric: metric.tag(),
        orthonormality_tol: ORTHONORMALITY_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseSymMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicate_column_is_dropped() {
        let w = DenseMat::from_columns(3, &[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let b = orthonormalize(&w, Metric::L2, DROP_TOL).unwrap();
        assert_eq!(b.dim(), 1);
        assert_eq!(b.col(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn diagonal_metric_scales_columns() {
        let a = SparseSymMatrix::diagonal(&[4.0, 9.0]);
        let w = DenseMat::identity(2);
        let b = orthonormalize(&w, Metric::Energy(&a), DROP_TOL).unwrap();
        assert_eq!(b.gram_metric(), GramMetric::Energy);
        assert!((b.col(0)[0] - 0.5).abs() < 1e-15 && b.col(0)[1] == 0.0);
        assert!((b.col(1)[1] - 1.0 / 3.0).abs() < 1e-15 && b.col(1)[0] == 0.0);
    }

    #[test]
    fn random_full_rank_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let w = DenseMat::from_columns(20, &cols).unwrap();
        let diag: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        let g = SparseSymMatrix::diagonal(&diag);
        for metric in [Metric::L2, Metric::Mass(&g)] {
            let b = orthonormalize(&w, metric, DROP_TOL).unwrap();
            assert_eq!(b.dim(), 5);
            assert!(b.gram_defect(metric).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn all_zero_input_is_an_error() {
        let w = DenseMat::zeros(4, 2);
        assert!(matches!(orthonormalize(&w, Metric::L2, DROP_TOL), Err(Error::EmptyBasis)));
    }
}
