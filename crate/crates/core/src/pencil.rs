//! The symmetric pencil `(A, M)` and its dense oracle spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    dense_gen_eig, dense_sym_eig, DenseMat, Metric, SparseSymMatrix, DEFAULT_DENSE_LIMIT,
};

/// Stiffness `A` and optional mass `M`; `M = None` stands for the identity.
#[derive(Clone, Debug)]
pub struct Pencil {
    a: SparseSymMatrix,
    m: Option<SparseSymMatrix>,
}

impl Pencil {
    pub fn new(a: SparseSymMatrix, m: Option<SparseSymMatrix>) -> Result<Self> {
        if let Some(m) = &m {
            if m.n() != a.n() {
                return Err(Error::DimensionMismatch {
                    expected: a.n(),
                    got: m.n(),
                });
            }
        }
        Ok(Pencil { a, m })
    }

    pub fn standard(a: SparseSymMatrix) -> Self {
        Pencil { a, m: None }
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn a(&self) -> &SparseSymMatrix {
        &self.a
    }

    pub fn m(&self) -> Option<&SparseSymMatrix> {
        self.m.as_ref()
    }

    /// The L² product of the pencil: `M`-weighted, or Euclidean without `M`.
    pub fn mass_metric(&self) -> Metric<'_> {
        match &self.m {
            Some(m) => Metric::Mass(m),
            None => Metric::L2,
        }
    }

    pub fn energy_metric(&self) -> Metric<'_> {
        Metric::Energy(&self.a)
    }

    /// `Mx`.
    pub fn apply_m(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.mass_metric().apply(x)
    }

    pub fn dense_m(&self) -> DenseMat {
        match &self.m {
            Some(m) => m.to_dense(),
            None => DenseMat::identity(self.n()),
        }
    }

    /// Every eigenpair by the dense oracle.
    pub fn exact_eigs(&self) -> Result<ExactEigenSet> {
        ExactEigenSet::compute(self)
    }
}

/// Exact eigenpairs of a pencil with `A`-orthonormal vectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactEigenSet {
    pub values: Vec<f64>,
    pub vectors: DenseMat,
}

impl ExactEigenSet {
    pub fn compute(p: &Pencil) -> Result<Self> {
        if p.n() > DEFAULT_DENSE_LIMIT {
            return Err(Error::DenseLimit {
                n: p.n(),
                limit: DEFAULT_DENSE_LIMIT,
            });
        }
        let a = p.a().to_dense();
        let res = match p.m() {
            Some(m) => dense_gen_eig(&a, &m.to_dense())?,
            None => dense_sym_eig(&a)?,
        };
        let mut vectors = res.vectors;
        for (j, &lam) in res.values.iter().enumerate() {
            if !(lam > 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "eigenvalue {j} of the pencil is {lam:e}"
                )));
            }
            // M-normalized x has ‖x‖_A² = λ.
            vectors.scale_column(j, 1.0 / lam.sqrt());
        }
        Ok(ExactEigenSet {
            values: res.values,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        self.vectors.col(i)
    }

    pub fn mu(&self, i: usize) -> f64 {
        1.0 / self.values[i]
    }

    /// First `k` vectors as a matrix.
    pub fn leading(&self, k: usize) -> DenseMat {
        self.vectors.select_columns(0..k)
    }
}
