//! Sparse and small-dense linear algebra.

mod cg;
mod cholesky;
mod dense;
mod eig;
mod orth;
mod sparse;
mod vector;

pub use cg::{cg_solve, CgOptions, CgSolution, CgSolver, LinearSolver, DEFAULT_CG_TOL};
pub use cholesky::Cholesky;
pub use dense::DenseMat;
pub use eig::{
    dense_gen_eig, dense_sym_eig, dense_sym_eig_with_limit, dense_sym_eigvals, DenseEigResult,
    DEFAULT_DENSE_LIMIT, EIG_SYMMETRY_TOL,
};
pub(crate) use eig::fix_signs;
pub use orth::{orthonormalize, Basis, DROP_TOL, ORTHONORMALITY_TOL};
pub use sparse::{CsrMatrix, SparseSymMatrix, SYMMETRY_TOL};
pub use vector::{axpy, dot, inner, norm, norm2, scaled, sub, GramMetric, Metric};
