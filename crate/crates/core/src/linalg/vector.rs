use crate::error::{Error, Result};
use crate::linalg::SparseSymMatrix;

/// Inner-product metric used for norms, projections and orthonormalization.
#[derive(Clone, Copy, Debug)]
pub enum Metric<'a> {
    /// Euclidean `xᵀy`.
    L2,
    /// Mass-weighted `xᵀMy` (the discrete L² product of a pencil).
    Mass(&'a SparseSymMatrix),
    /// Energy `xᵀAy`.
    Energy(&'a SparseSymMatrix),
}

/// Tag recorded on a [`Basis`](crate::linalg::Basis) naming the metric it is orthonormal in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GramMetric {
    L2,
    Mass,
    Energy,
}

impl GramMetric {
    pub fn name(self) -> &'static str {
        match self {
            GramMetric::L2 => "L2",
            GramMetric::Mass => "mass",
            GramMetric::Energy => "energy",
        }
    }
}

impl<'a> Metric<'a> {
    pub fn tag(&self) -> GramMetric {
        match self {
            Metric::L2 => GramMetric::L2,
            Metric::Mass(_) => GramMetric::Mass,
            Metric::Energy(_) => GramMetric::Energy,
        }
    }

    pub fn matrix(&self) -> Option<&'a SparseSymMatrix> {
        match *self {
            Metric::L2 => None,
            Metric::Mass(m) | Metric::Energy(m) => Some(m),
        }
    }

    /// `Gx`, or a copy of `x` for the Euclidean metric.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.matrix() {
            None => Ok(x.to_vec()),
            Some(g) => g.spmv(x),
        }
    }
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn scaled(x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|v| v * s).collect()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `(x, y)_G`.
pub fn inner(x: &[f64], y: &[f64], metric: Metric<'_>) -> Result<f64> {
    check_len(x.len(), y.len())?;
    match metric.matrix() {
        None => Ok(dot(x, y)),
        Some(g) => {
            check_len(g.n(), x.len())?;
            Ok(dot(x, &g.spmv(y)?))
        }
    }
}

/// `‖x‖_G`; a negative quadratic form signals a non-SPD weight.
pub fn norm(x: &[f64], metric: Metric<'_>) -> Result<f64> {
    let q = inner(x, x, metric)?;
    if q < 0.0 {
        // Round-off on a near-null vector is not an SPD violation.
        let scale = match metric.matrix() {
            Some(g) => g.max_abs() * dot(x, x) * x.len() as f64,
            None => 0.0,
        };
        if q < -1e-13 * scale || scale == 0.0 {
            return Err(Error::NegativeNorm(q));
        }
        return Ok(0.0);
    }
    Ok(q.sqrt())
}
