//! Rayleigh–Ritz projection, the L² and energy projectors, and the computable
//! quantities of the a posteriori error estimates (`η_K`, gaps, `θ` factors).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    dense_gen_eig, dense_sym_eig, dense_sym_eigvals, dot, fix_signs, norm, Basis, Cholesky,
    DenseMat, GramMetric, Metric, SparseSymMatrix, DEFAULT_DENSE_LIMIT,
};
use crate::pencil::Pencil;

/// Relative distance under which two gaps count as a tie.
pub const TIE_TOL: f64 = 1e-12;

/// Ritz pairs in ascending order with `A`-normalized vectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RitzSet {
    pub values: Vec<f64>,
    pub vectors: DenseMat,
    /// `μ̃_j = 1/λ̃_j`, descending.
    pub mu_values: Vec<f64>,
}

impl RitzSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        self.vectors.col(j)
    }

    /// The `k` smallest pairs.
    pub fn truncated(&self, k: usize) -> RitzSet {
        let k = k.min(self.len());
        RitzSet {
            values: self.values[..k].to_vec(),
            vectors: self.vectors.select_columns(0..k),
            mu_values: self.mu_values[..k].to_vec(),
        }
    }

    /// Index whose `μ̃` is closest to `1/λ`, with a flag set when another
    /// index is equally close (the smaller index is returned).
    pub fn closest_to(&self, lambda: f64) -> Result<(usize, bool)> {
        if self.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let mu = 1.0 / lambda;
        let dist: Vec<f64> = self.mu_values.iter().map(|m| (m - mu).abs()).collect();
        let mut best = 0;
        for (j, &d) in dist.iter().enumerate() {
            if d < dist[best] {
                best = j;
            }
        }
        let scale = TIE_TOL * mu.abs().max(f64::MIN_POSITIVE);
        let tie = dist
            .iter()
            .enumerate()
            .any(|(j, &d)| j != best && (d - dist[best]).abs() <= scale);
        Ok((best, tie))
    }
}

/// Solves the projected problem `(VᵀAV)y = λ̃(VᵀMV)y` on `K`.
pub fn ritz(p: &Pencil, k: &Basis) -> Result<RitzSet> {
    if k.dim() == 0 {
        return Err(Error::EmptyBasis);
    }
    if k.n() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: k.n(),
        });
    }
    let mass_orthonormal = matches!(
        (k.gram_metric(), p.m()),
        (GramMetric::Mass, Some(_)) | (GramMetric::L2, None)
    );
    ritz_on_columns(p, k.columns(), mass_orthonormal)
}

pub(crate) fn ritz_on_columns(p: &Pencil, v: &DenseMat, mass_orthonormal: bool) -> Result<RitzSet> {
    let av = p.a().apply_dense(v)?;
    let mut am = v.t_matmul(&av)?;
    am.symmetrize_internal();
    let res = if mass_orthonormal {
        dense_sym_eig(&am)?
    } else {
        let mv = match p.m() {
            Some(m) => m.apply_dense(v)?,
            None => v.clone(),
        };
        let mut mm = v.t_matmul(&mv)?;
        mm.symmetrize_internal();
        dense_gen_eig(&am, &mm)?
    };
    let mut vectors = v.matmul(&res.vectors)?;
    let mut mu_values = Vec::with_capacity(res.values.len());
    for (j, &lam) in res.values.iter().enumerate() {
        if !(lam > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("Ritz value {j} is {lam:e}")));
        }
        // Recompute the energy norm instead of trusting ‖ũ‖_A² = λ̃.
        let e = norm(vectors.col(j), p.energy_metric())?;
        vectors.scale_column(j, 1.0 / e);
        mu_values.push(1.0 / lam);
    }
    fix_signs(&mut vectors);
    Ok(RitzSet {
        values: res.values,
        vectors,
        mu_values,
    })
}

/// Orthogonal projection `V(VᵀGx)` onto `K` in the metric the basis is orthonormal in.
pub fn project(metric: Metric<'_>, k: &Basis, x: &[f64]) -> Result<Vec<f64>> {
    if metric.tag() != k.gram_metric() {
        return Err(Error::MetricMismatch {
            expected: metric.tag().name(),
            found: k.gram_metric().name(),
        });
    }
    let gx = metric.apply(x)?;
    let c = k.columns().t_matvec(&gx)?;
    k.columns().matvec(&c)
}

/// Energy (Galerkin) projector `P_K` for an arbitrary basis of `K`.
#[derive(Clone, Debug)]
pub struct EnergyProjector {
    v: DenseMat,
    av: DenseMat,
    gram: Cholesky,
}

impl EnergyProjector {
    pub fn new(a: &SparseSymMatrix, v: &DenseMat) -> Result<Self> {
        let av = a.apply_dense(v)?;
        let mut g = v.t_matmul(&av)?;
        g.symmetrize_internal();
        let gram = Cholesky::factor(&g)
            .map_err(|_| Error::RankDeficient("energy Gram matrix of K is singular".into()))?;
        Ok(EnergyProjector {
            v: v.clone(),
            av,
            gram,
        })
    }

    /// `P_K x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let rhs = self.av.t_matvec(x)?;
        let c = self.gram.solve(&rhs)?;
        self.v.matvec(&c)
    }

    /// `(I − P_K)x`.
    pub fn complement(&self, x: &[f64]) -> Result<Vec<f64>> {
        let px = self.apply(x)?;
        Ok(x.iter().zip(&px).map(|(a, b)| a - b).collect())
    }
}

/// Desk-scale oracle for `η_K = sup_{‖g‖_M=1} ‖(I − P_K)A⁻¹Mg‖_A`.
///
/// The `K`-independent part `LᵀA⁻¹L` (with `M = LLᵀ`) is formed once so
/// that many subspaces of the same pencil can be evaluated cheaply.
#[derive(Clone, Debug)]
pub struct EtaOracle {
    base: DenseMat,
    l_mass: DenseMat,
    a: SparseSymMatrix,
}

impl EtaOracle {
    pub fn new(p: &Pencil) -> Result<Self> {
        let n = p.n();
        if n > DEFAULT_DENSE_LIMIT {
            return Err(Error::DenseLimit {
                n,
                limit: DEFAULT_DENSE_LIMIT,
            });
        }
        let ca = Cholesky::factor(&p.a().to_dense())?;
        let l_mass = match p.m() {
            Some(m) => Cholesky::factor(&m.to_dense())?.l().clone(),
            None => DenseMat::identity(n),
        };
        let mut r = l_mass.clone();
        for j in 0..n {
            ca.solve_lower_in_place(r.col_mut(j));
        }
        let mut base = r.t_matmul(&r)?;
        base.symmetrize_internal();
        Ok(EtaOracle {
            base,
            l_mass,
            a: p.a().clone(),
        })
    }

    /// `η_K` for the span of the columns of `v` (any basis).
    pub fn eta(&self, v: &DenseMat) -> Result<f64> {
        if v.cols() == 0 {
            return Err(Error::EmptyBasis);
        }
        let av = self.a.apply_dense(v)?;
        let mut g = v.t_matmul(&av)?;
        g.symmetrize_internal();
        let cg = Cholesky::factor(&g)
            .map_err(|_| Error::RankDeficient("energy Gram matrix of K is singular".into()))?;
        // S = C_G⁻¹ VᵀL, so LᵀV G⁻¹ VᵀL = SᵀS.
        let mut s = v.t_matmul(&self.l_mass)?;
        for j in 0..s.cols() {
            cg.solve_lower_in_place(s.col_mut(j));
        }
        let sts = s.t_matmul(&s)?;
        let n = self.base.rows();
        let mut c = self.base.clone();
        for j in 0..n {
            for i in 0..n {
                c[(i, j)] -= sts[(i, j)];
            }
        }
        c.symmetrize_internal();
        let vals = dense_sym_eigvals(&c)?;
        Ok(vals.last().copied().unwrap_or(0.0).max(0.0).sqrt())
    }
}

/// `η_K` by the dense oracle.
pub fn eta_k_oracle(p: &Pencil, k: &Basis) -> Result<f64> {
    EtaOracle::new(p)?.eta(k.columns())
}

/// `min |μ_j − μ|` over the indices not in `exclude`.
pub fn gap_delta(mus: &[f64], mu: f64, exclude: &[usize]) -> Result<f64> {
    let d = mus
        .iter()
        .enumerate()
        .filter(|(j, _)| !exclude.contains(j))
        .map(|(_, m)| (m - mu).abs())
        .fold(f64::INFINITY, f64::min);
    if d.is_infinite() {
        return Err(Error::EmptyCandidates);
    }
    Ok(d)
}

/// Block gap `δ_{k,i} = min_{k<j≤m} |μ̃_j − μ_i|` (indices `k..m`, zero-based).
pub fn gap_delta_block(mus: &[f64], mu_i: f64, k: usize) -> Result<f64> {
    let exclude: Vec<usize> = (0..k.min(mus.len())).collect();
    gap_delta(mus, mu_i, &exclude)
}

/// Both sides of the energy and L² estimates for one exact eigenvector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Index of the exact pair (zero-based).
    pub index: usize,
    /// Index of the Ritz pair the estimate is about.
    pub ritz_index: usize,
    #[serde(rename = "eta_K")]
    pub eta_k: f64,
    pub delta: f64,
    pub theta: f64,
    #[serde(rename = "eta_Ki")]
    pub eta_ki: f64,
    pub lhs_energy: f64,
    pub rhs_energy: f64,
    pub lhs_l2: f64,
    pub rhs_l2: f64,
    /// Another Ritz value was equally close to `μ`.
    pub tie: bool,
}

impl BoundReport {
    pub fn energy_holds(&self) -> bool {
        holds(self.lhs_energy, self.rhs_energy)
    }

    pub fn l2_holds(&self) -> bool {
        holds(self.lhs_l2, self.rhs_l2)
    }
}

/// The acceptance rule `lhs ≤ rhs·(1 + 1e−9) + 1e−12`.
pub fn holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + 1e-9) + 1e-12
}

fn check_vec(p: &Pencil, u: &[f64]) -> Result<()> {
    if u.len() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: u.len(),
        });
    }
    Ok(())
}

fn check_gap(delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::DegenerateGap(delta));
    }
    Ok(delta)
}

/// Single-pair estimate: `‖u − E u‖_A ≤ θ‖(I − P_K)u‖_A` and
/// `‖u − E u‖_M ≤ η_{K,i}‖u − E u‖_A`, where `E` is the energy projection onto
/// `span{ũ_i}`. `u` must be an exact eigenvector with `‖u‖_A = 1` and `ritz`
/// the full Ritz set on `K`.
pub fn energy_bound_single(
    p: &Pencil,
    k: &Basis,
    eta_k: f64,
    lambda: f64,
    u: &[f64],
    ritz: &RitzSet,
    i: usize,
) -> Result<BoundReport> {
    check_vec(p, u)?;
    if i >= ritz.len() {
        return Err(Error::invalid(format!("Ritz index {i} out of range {}", ritz.len())));
    }
    let mu = 1.0 / lambda;
    let delta = check_gap(gap_delta(&ritz.mu_values, mu, &[i])?)?;
    let mu1 = ritz.mu_values[0];
    let theta = (1.0 + mu1 * eta_k * eta_k / (delta * delta)).sqrt();
    let eta_ki = (1.0 + mu1 / delta) * eta_k;

    let ui = ritz.vector(i);
    let au = p.a().spmv(u)?;
    let c = dot(&au, ui);
    let err: Vec<f64> = u.iter().zip(ui).map(|(a, b)| a - c * b).collect();
    let lhs_energy = norm(&err, p.energy_metric())?;
    let lhs_l2 = norm(&err, p.mass_metric())?;
    let proj = EnergyProjector::new(p.a(), k.columns())?;
    let best = norm(&proj.complement(u)?, p.energy_metric())?;

    let (closest, tie_any) = ritz.closest_to(lambda)?;
    let tie = tie_any && closest == i;
    Ok(BoundReport {
        index: i,
        ritz_index: i,
        eta_k,
        delta,
        theta,
        eta_ki,
        lhs_energy,
        rhs_energy: theta * best,
        lhs_l2,
        rhs_l2: eta_ki * lhs_energy,
        tie,
    })
}

/// Block estimate for the exact vectors `u_1..u_k` (columns of `us`,
/// `A`-normalized) against the energy projection onto `span{ũ_1..ũ_k}`.
pub fn energy_bound_block(
    p: &Pencil,
    k_basis: &Basis,
    eta_k: f64,
    lambdas: &[f64],
    us: &DenseMat,
    ritz: &RitzSet,
    k: usize,
) -> Result<Vec<BoundReport>> {
    let m = ritz.len();
    if m <= k {
        return Err(Error::invalid(format!(
            "block estimate needs more Ritz pairs than k (m = {m}, k = {k})"
        )));
    }
    if lambdas.len() < k || us.cols() < k {
        return Err(Error::invalid("fewer exact pairs than k"));
    }
    let mu_k1 = ritz.mu_values[k];
    let proj = EnergyProjector::new(p.a(), k_basis.columns())?;
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let u = us.col(i);
        check_vec(p, u)?;
        let delta = check_gap(gap_delta_block(&ritz.mu_values, 1.0 / lambdas[i], k)?)?;
        let theta = (1.0 + mu_k1 * eta_k * eta_k / (delta * delta)).sqrt();
        let eta_ki = (1.0 + mu_k1 / delta) * eta_k;
        let err = block_error_vector(p, u, ritz, k)?;
        let lhs_energy = norm(&err, p.energy_metric())?;
        let lhs_l2 = norm(&err, p.mass_metric())?;
        let best = norm(&proj.complement(u)?, p.energy_metric())?;
        out.push(BoundReport {
            index: i,
            ritz_index: i,
            eta_k,
            delta,
            theta,
            eta_ki,
            lhs_energy,
            rhs_energy: theta * best,
            lhs_l2,
            rhs_l2: eta_ki * lhs_energy,
            tie: false,
        });
    }
    Ok(out)
}

/// `u − E_{m,k}u` with `E_{m,k}` the energy projection onto the first `k` Ritz vectors.
pub(crate) fn block_error_vector(p: &Pencil, u: &[f64], ritz: &RitzSet, k: usize) -> Result<Vec<f64>> {
    let au = p.a().spmv(u)?;
    let mut err = u.to_vec();
    for j in 0..k {
        let uj = ritz.vector(j);
        let c = dot(&au, uj);
        for (e, v) in err.iter_mut().zip(uj) {
            *e -= c * v;
        }
    }
    Ok(err)
}

/// `|(λ̃_j − λ)(P_K u, ũ_j)_M − λ(u − P_K u, ũ_j)_M|`.
pub fn strang_residual(
    p: &Pencil,
    k: &Basis,
    lambda: f64,
    u: &[f64],
    ritz: &RitzSet,
    j: usize,
) -> Result<f64> {
    check_vec(p, u)?;
    let proj = EnergyProjector::new(p.a(), k.columns())?;
    strang_residual_with(p, &proj, lambda, u, ritz, j)
}

pub fn strang_residual_with(
    p: &Pencil,
    proj: &EnergyProjector,
    lambda: f64,
    u: &[f64],
    ritz: &RitzSet,
    j: usize,
) -> Result<f64> {
    let pu = proj.apply(u)?;
    let mu_j = p.apply_m(ritz.vector(j))?;
    let lhs = (ritz.values[j] - lambda) * dot(&pu, &mu_j);
    let rhs = lambda * (dot(u, &mu_j) - dot(&pu, &mu_j));
    Ok((lhs - rhs).abs())
}

/// `(Aψ, ψ) / (ψ, ψ)_M`.
pub fn rayleigh_quotient(p: &Pencil, psi: &[f64]) -> Result<f64> {
    check_vec(p, psi)?;
    let den = dot(psi, &p.apply_m(psi)?);
    if den == 0.0 {
        return Err(Error::invalid("Rayleigh quotient of the zero vector"));
    }
    Ok(dot(psi, &p.a().spmv(psi)?) / den)
}
