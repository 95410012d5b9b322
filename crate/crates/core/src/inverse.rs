//! Inverse power method on an enriched subspace.
//!
//! Each outer step solves a Rayleigh–Ritz problem on `K + span{U}` and then
//! one linear system `A u_i = λ_i M ũ_i` per wanted pair. The block form
//! tracks the `k` smallest pairs; the single-vector form follows whichever
//! Ritz vector overlaps most with the previous iterate.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    dot, norm, norm2, orthonormalize, Basis, DenseMat, LinearSolver, DEFAULT_CG_TOL, DROP_TOL,
};
use crate::pencil::{ExactEigenSet, Pencil};
use crate::projection::{gap_delta, gap_delta_block, ritz_on_columns, EnergyProjector, EtaOracle, RitzSet};
use crate::report::{fmt17, fmt17_opt};

/// Previous energy error below which a measured contraction is round-off.
pub const NOISE_FLOOR: f64 = 1e-11;

/// Outer iterations without residual decrease that count as stagnation.
pub const STAGNATION_WINDOW: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSolverKind {
    Cg,
    GmgVcycle,
    AmgVcycle,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IpmConfig {
    pub k: usize,
    pub max_outer: usize,
    pub residual_tol: f64,
    pub inner_solver: InnerSolverKind,
    pub inner_tol: f64,
    pub track_exact: bool,
}

impl Default for IpmConfig {
    fn default() -> Self {
        IpmConfig {
            k: 1,
            max_outer: 100,
            residual_tol: 1e-10,
            inner_solver: InnerSolverKind::Cg,
            inner_tol: DEFAULT_CG_TOL,
            track_exact: false,
        }
    }
}

impl IpmConfig {
    pub fn validate(&self, n: usize, dim_k: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.residual_tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.k + dim_k > n {
            return Err(Error::invalid(format!(
                "k + dim(K) = {} exceeds n = {n}",
                self.k + dim_k
            )));
        }
        if self.max_outer == 0 {
            return Err(Error::invalid("max_outer must be at least 1"));
        }
        Ok(())
    }
}

/// Relative residual `‖Au − λMu‖₂ / (λ‖Mu‖₂)`.
pub fn relative_residual(p: &Pencil, lambda: f64, u: &[f64]) -> Result<f64> {
    let au = p.a().spmv(u)?;
    let mu = p.apply_m(u)?;
    let r: Vec<f64> = au.iter().zip(&mu).map(|(a, m)| a - lambda * m).collect();
    let den = lambda.abs() * norm2(&mu);
    if den == 0.0 {
        return Err(Error::invalid("residual of the zero vector"));
    }
    Ok(norm2(&r) / den)
}

/// `[K | U]` orthonormalized in the mass metric of the pencil.
pub fn enrich(p: &Pencil, k: &Basis, u: &DenseMat) -> Result<DenseMat> {
    let w = k.columns().hstack(u)?;
    Ok(orthonormalize(&w, p.mass_metric(), DROP_TOL)?.into_columns())
}

#[derive(Clone, Debug)]
pub struct BlockStep {
    /// The `k` smallest Ritz pairs on the enriched space.
    pub ritz: RitzSet,
    /// `μ^{(ℓ+1)}_j` of every Ritz pair on the enriched space.
    pub enriched_mu: Vec<f64>,
    /// Mass-orthonormal basis of the enriched space.
    pub enriched: DenseMat,
    /// Un-normalized solutions of `A u_i = λ_i M ũ_i`.
    pub next: DenseMat,
}

/// One step of the block method.
pub fn ipm_block_step(
    p: &Pencil,
    k_basis: &Basis,
    u_prev: &DenseMat,
    k: usize,
    solver: &dyn LinearSolver,
) -> Result<BlockStep> {
    if u_prev.rows() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: u_prev.rows(),
        });
    }
    if (0..u_prev.cols()).any(|j| u_prev.col(j).iter().all(|&v| v == 0.0)) {
        return Err(Error::invalid("previous iterate has a zero column"));
    }
    let enriched = enrich(p, k_basis, u_prev)?;
    if enriched.cols() < k {
        return Err(Error::RankDeficient(format!(
            "enriched space has dimension {} < k = {k}",
            enriched.cols()
        )));
    }
    let all = ritz_on_columns(p, &enriched, true)?;
    let ritz = all.truncated(k);
    let next = solve_block(p, &ritz, solver)?;
    Ok(BlockStep {
        enriched_mu: all.mu_values,
        ritz,
        enriched,
        next,
    })
}

fn solve_block(p: &Pencil, ritz: &RitzSet, solver: &dyn LinearSolver) -> Result<DenseMat> {
    let cols: Vec<Vec<f64>> = (0..ritz.len())
        .into_par_iter()
        .map(|i| {
            let mut rhs = p.apply_m(ritz.vector(i))?;
            for v in &mut rhs {
                *v *= ritz.values[i];
            }
            solver.solve(&rhs)
        })
        .collect::<Result<_>>()?;
    DenseMat::from_columns(p.n(), &cols)
}

#[derive(Clone, Debug)]
pub struct SingleStep {
    pub lambda: f64,
    /// Index of the selected Ritz pair on the enriched space.
    pub ritz_index: usize,
    /// Another Ritz vector had the same overlap.
    pub tie: bool,
    pub ritz_vector: Vec<f64>,
    /// Every Ritz pair on the enriched space.
    pub enriched_ritz: RitzSet,
    pub enriched: DenseMat,
    pub next: Vec<f64>,
}

/// One step of the single-vector method.
pub fn ipm_single_step(
    p: &Pencil,
    k_basis: &Basis,
    u_prev: &[f64],
    solver: &dyn LinearSolver,
) -> Result<SingleStep> {
    if u_prev.len() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: u_prev.len(),
        });
    }
    let prev_norm = norm(u_prev, p.mass_metric())?;
    if prev_norm == 0.0 {
        return Err(Error::invalid("previous iterate is zero"));
    }
    let up = DenseMat::from_columns(p.n(), &[u_prev.to_vec()])?;
    let enriched = enrich(p, k_basis, &up)?;
    let all = ritz_on_columns(p, &enriched, true)?;
    let m_prev = p.apply_m(u_prev)?;
    let overlaps: Vec<f64> = (0..all.len())
        .map(|j| {
            let v = all.vector(j);
            // ‖ũ_j‖_M = sqrt(μ̃_j) for A-normalized Ritz vectors.
            (dot(v, &m_prev) / (all.mu_values[j].sqrt() * prev_norm)).abs()
        })
        .collect();
    let mut best = 0;
    for (j, &o) in overlaps.iter().enumerate() {
        if o > overlaps[best] {
            best = j;
        }
    }
    let tie = overlaps
        .iter()
        .enumerate()
        .any(|(j, &o)| j != best && (o - overlaps[best]).abs() <= 1e-12 * overlaps[best].max(1e-300));
    let lambda = all.values[best];
    let ritz_vector = all.vector(best).to_vec();
    let mut rhs = p.apply_m(&ritz_vector)?;
    for v in &mut rhs {
        *v *= lambda;
    }
    let next = solver.solve(&rhs)?;
    Ok(SingleStep {
        lambda,
        ritz_index: best,
        tie,
        ritz_vector,
        enriched_ritz: all,
        enriched,
        next,
    })
}

/// Quantities entering the block rate estimate.
#[derive(Clone, Debug)]
pub struct BlockRateInputs<'a> {
    /// `η` of the enriched space.
    pub eta: f64,
    /// `μ^{(ℓ+1)}_j` on the enriched space, descending.
    pub mu_ritz: &'a [f64],
    /// Exact `λ_k` and `λ_{k+1}`.
    pub lambda_k: f64,
    pub lambda_k1: f64,
    pub k: usize,
}

/// `θ·√(λ_k/λ_{k+1})·√λ_k^{(ℓ+1)}·η_{K,k,k}` for the block method.
pub fn theoretical_rate_block(q: &BlockRateInputs<'_>) -> Result<f64> {
    let k = q.k;
    if q.mu_ritz.len() <= k {
        return Err(Error::invalid(format!(
            "block rate needs more than k = {k} Ritz values, got {}",
            q.mu_ritz.len()
        )));
    }
    let delta = gap_delta_block(q.mu_ritz, 1.0 / q.lambda_k, k)?;
    if !(delta > 0.0) {
        return Err(Error::DegenerateGap(delta));
    }
    let mu_k1 = q.mu_ritz[k];
    let theta = (1.0 + mu_k1 * q.eta * q.eta / (delta * delta)).sqrt();
    let eta_kk = (1.0 + mu_k1 / delta) * q.eta;
    let lambda_k_ritz = 1.0 / q.mu_ritz[k - 1];
    Ok(theta * (q.lambda_k / q.lambda_k1).sqrt() * lambda_k_ritz.sqrt() * eta_kk)
}

/// Quantities entering the single-vector rate estimate.
#[derive(Clone, Debug)]
pub struct SingleRateInputs<'a> {
    pub eta: f64,
    pub mu_ritz: &'a [f64],
    /// Selected Ritz index on the enriched space.
    pub i: usize,
    /// Exact target `λ` and the smallest exact `λ₁`.
    pub lambda: f64,
    pub lambda_1: f64,
}

/// `θ·√(λλ_i^{(ℓ+1)}/λ₁)·η_{K,i}` with `η_{K,i} = (1 + μ₁^{(ℓ+1)}/δ_i)η`.
pub fn theoretical_rate_single(q: &SingleRateInputs<'_>) -> Result<f64> {
    let delta = gap_delta(q.mu_ritz, 1.0 / q.lambda, &[q.i])?;
    if !(delta > 0.0) {
        return Err(Error::DegenerateGap(delta));
    }
    let mu1 = q.mu_ritz[0];
    let theta = (1.0 + mu1 * q.eta * q.eta / (delta * delta)).sqrt();
    let eta_i = (1.0 + mu1 / delta) * q.eta;
    let lambda_i = 1.0 / q.mu_ritz[q.i];
    Ok(theta * (q.lambda * lambda_i / q.lambda_1).sqrt() * eta_i)
}

/// The rate bound for the eigenvector coarse space `K = span{u_1..u_nc}`:
/// `√(1 + 1/(λ_{k+1}λ_{nc+1}δ²))·√(λ_k/λ_{k+1})·(1 + 1/(λ_{k+1}δ))·√(λ_k^{(ℓ+1)}/λ_{nc+1})`.
pub fn ideal_space_rate(
    lambda_k: f64,
    lambda_k1: f64,
    lambda_nc1: f64,
    lambda_k_ritz: f64,
    delta_kk: f64,
) -> Result<f64> {
    if !(delta_kk > 0.0) {
        return Err(Error::DegenerateGap(delta_kk));
    }
    let theta = (1.0 + 1.0 / (lambda_k1 * lambda_nc1 * delta_kk * delta_kk)).sqrt();
    let eta = (1.0 + 1.0 / (lambda_k1 * delta_kk)) * (1.0 / lambda_nc1).sqrt();
    Ok(theta * (lambda_k / lambda_k1).sqrt() * eta * lambda_k_ritz.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    Stagnated,
    Diverged,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRow {
    pub ell: usize,
    pub lambdas: Vec<f64>,
    pub residuals: Vec<f64>,
    pub energy_err: Option<f64>,
    pub measured_rate: Option<f64>,
    pub theo_rate: Option<f64>,
    /// Gap `δ` entering the theoretical factor.
    pub delta: Option<f64>,
    /// `1/‖u_i^{(ℓ)}‖_A` of the raw solves.
    pub alpha: Vec<f64>,
    pub enriched_dim: usize,
    /// Previous energy error was above the noise floor.
    pub rate_resolved: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationReport {
    pub algorithm: String,
    pub n: usize,
    pub k: usize,
    pub coarse_dim: usize,
    pub seed: Option<u64>,
    pub status: RunStatus,
    pub iterations: usize,
    pub final_values: Vec<f64>,
    /// Exact index tracked by the single-vector method.
    pub target_index: Option<usize>,
    pub tie_events: usize,
    pub rows: Vec<IterationRow>,
    /// Backend-specific parameters such as mesh sizes.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, serde_json::Value>,
    #[serde(skip)]
    pub final_vectors: Option<DenseMat>,
}

impl IterationReport {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    /// `(measured, theoretical)` pairs from iteration 1 on, where both are
    /// available and the measurement is above round-off.
    pub fn rate_pairs(&self) -> Vec<(usize, f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.rate_resolved)
            .filter_map(|r| Some((r.ell, r.measured_rate?, r.theo_rate?)))
            .collect()
    }

    /// Geometric mean of the resolved measured rates.
    pub fn mean_measured_rate(&self, skip_first: usize) -> Option<f64> {
        let rates: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.rate_resolved && r.ell > skip_first)
            .filter_map(|r| r.measured_rate)
            .filter(|r| *r > 0.0)
            .collect();
        if rates.is_empty() {
            return None;
        }
        Some((rates.iter().map(|r| r.ln()).sum::<f64>() / rates.len() as f64).exp())
    }

    /// Geometric mean of the available theoretical factors.
    pub fn mean_theo_rate(&self) -> Option<f64> {
        let rates: Vec<f64> = self.rows.iter().filter_map(|r| r.theo_rate).collect();
        if rates.is_empty() {
            return None;
        }
        Some((rates.iter().map(|r| r.ln()).sum::<f64>() / rates.len() as f64).exp())
    }

    pub fn to_csv(&self) -> String {
        let width = self.rows.iter().map(|r| r.lambdas.len()).max().unwrap_or(self.k);
        let mut s = String::from("ell");
        for i in 1..=width {
            let _ = write!(s, ",lambda_{i}");
        }
        for i in 1..=width {
            let _ = write!(s, ",res_{i}");
        }
        s.push_str(",energy_err,measured_rate,theo_rate\n");
        for r in &self.rows {
            let _ = write!(s, "{}", r.ell);
            for i in 0..width {
                let _ = write!(s, ",{}", r.lambdas.get(i).map(|&v| fmt17(v)).unwrap_or_default());
            }
            for i in 0..width {
                let _ = write!(s, ",{}", r.residuals.get(i).map(|&v| fmt17(v)).unwrap_or_default());
            }
            let _ = writeln!(
                s,
                ",{},{},{}",
                fmt17_opt(r.energy_err),
                fmt17_opt(r.measured_rate),
                fmt17_opt(r.theo_rate)
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        crate::report::to_json17(self)
    }
}

/// Exact data used for error tracking.
#[derive(Clone, Debug)]
pub struct Tracker {
    pub exact: ExactEigenSet,
    pub eta: EtaOracle,
}

impl Tracker {
    pub fn new(p: &Pencil) -> Result<Self> {
        Ok(Tracker {
            exact: p.exact_eigs()?,
            eta: EtaOracle::new(p)?,
        })
    }
}

/// Uniform random block on `[-1, 1)`, orthonormalized in the mass metric.
pub fn random_block(p: &Pencil, k: usize, seed: u64) -> Result<DenseMat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..p.n()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let w = DenseMat::from_columns(p.n(), &cols)?;
    let b = orthonormalize(&w, p.mass_metric(), DROP_TOL)?;
    if b.dim() < k {
        return Err(Error::RankDeficient("random initial block lost rank".into()));
    }
    Ok(b.into_columns())
}

/// `(Σ_i ‖(I − P_U)u_i‖_A²)^{1/2}` for the exact `u_1..u_k`.
fn block_energy_error(p: &Pencil, exact: &ExactEigenSet, u: &DenseMat, k: usize) -> Result<f64> {
    let proj = EnergyProjector::new(p.a(), u)?;
    let mut sum = 0.0;
    for i in 0..k {
        let r = proj.complement(exact.vector(i))?;
        let e = norm(&r, p.energy_metric())?;
        sum += e * e;
    }
    Ok(sum.sqrt())
}

/// `‖u − E u‖_A` with `E` the energy projection onto `span{v}`.
fn single_energy_error(p: &Pencil, u: &[f64], v: &[f64]) -> Result<f64> {
    let av = p.a().spmv(v)?;
    let vv = dot(v, &av);
    let c = dot(u, &av) / vv;
    let r: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - c * b).collect();
    norm(&r, p.energy_metric())
}

struct Monitor {
    best: f64,
    since_best: usize,
}

impl Monitor {
    fn new() -> Self {
        Monitor {
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    fn update(&mut self, worst: f64, tol: f64) -> Option<RunStatus> {
        if !worst.is_finite() || worst > 1e8 * self.best.max(tol) {
            return Some(RunStatus::Diverged);
        }
        if worst <= tol {
            return Some(RunStatus::Converged);
        }
        if worst < self.best * (1.0 - 1e-3) {
            self.best = worst;
            self.since_best = 0;
        } else {
            self.since_best += 1;
            if self.since_best >= STAGNATION_WINDOW {
                return Some(RunStatus::Stagnated);
            }
        }
        None
    }
}

fn alphas(p: &Pencil, u: &DenseMat) -> Result<Vec<f64>> {
    u.columns()
        .map(|c| norm(c, p.energy_metric()).map(|e| 1.0 / e))
        .collect()
}

fn normalized_columns(p: &Pencil, u: &DenseMat) -> Result<DenseMat> {
    let mut out = u.clone();
    for j in 0..u.cols() {
        let e = norm(u.col(j), p.energy_metric())?;
        out.scale_column(j, 1.0 / e);
    }
    Ok(out)
}

/// Runs the block method until every Ritz residual is below tolerance.
pub fn ipm_run(
    p: &Pencil,
    k_basis: &Basis,
    u0: &DenseMat,
    cfg: &IpmConfig,
    solver: &dyn LinearSolver,
    tracker: Option<&Tracker>,
) -> Result<IterationReport> {
    cfg.validate(p.n(), k_basis.dim())?;
    let k = cfg.k;
    if u0.cols() != k {
        return Err(Error::invalid(format!("initial block has {} columns, k = {k}", u0.cols())));
    }
    let own;
    let tracker = match (cfg.track_exact, tracker) {
        (false, _) => None,
        (true, Some(t)) => Some(t),
        (true, None) => {
            own = Tracker::new(p)?;
            Some(&own)
        }
    };
    if let Some(t) = tracker {
        if t.exact.len() <= k {
            return Err(Error::invalid("tracking needs λ_{k+1}"));
        }
    }

    let mut rows = Vec::new();
    let mut u = u0.clone();
    let init_lambdas: Vec<f64> = u
        .columns()
        .map(|c| crate::projection::rayleigh_quotient(p, c))
        .collect::<Result<_>>()?;
    let init_res: Vec<f64> = u
        .columns()
        .zip(&init_lambdas)
        .map(|(c, &l)| relative_residual(p, l, c))
        .collect::<Result<_>>()?;
    let mut prev_err = match tracker {
        Some(t) => Some(block_energy_error(p, &t.exact, &u, k)?),
        None => None,
    };
    rows.push(IterationRow {
        ell: 0,
        lambdas: init_lambdas,
        residuals: init_res,
        energy_err: prev_err,
        measured_rate: None,
        theo_rate: None,
        delta: None,
        alpha: alphas(p, &u)?,
        enriched_dim: 0,
        rate_resolved: false,
    });

    let mut monitor = Monitor::new();
    let mut status = RunStatus::MaxIterations;
    let mut last_ritz = None;
    for ell in 1..=cfg.max_outer {
        let step = ipm_block_step(p, k_basis, &u, k, solver)?;
        let residuals: Vec<f64> = (0..k)
            .map(|i| relative_residual(p, step.ritz.values[i], step.ritz.vector(i)))
            .collect::<Result<_>>()?;
        let (energy_err, measured, theo, resolved, delta) = match tracker {
            Some(t) => {
                let err = block_energy_error(p, &t.exact, &step.next, k)?;
                let prev = prev_err.unwrap_or(f64::NAN);
                let delta = if step.enriched_mu.len() > k {
                    gap_delta_block(&step.enriched_mu, 1.0 / t.exact.values[k - 1], k).ok()
                } else {
                    None
                };
                let theo = if step.enriched_mu.len() > k {
                    let eta = t.eta.eta(&step.enriched)?;
                    theoretical_rate_block(&BlockRateInputs {
                        eta,
                        mu_ritz: &step.enriched_mu,
                        lambda_k: t.exact.values[k - 1],
                        lambda_k1: t.exact.values[k],
                        k,
                    })
                    .ok()
                } else {
                    None
                };
                prev_err = Some(err);
                (Some(err), Some(err / prev), theo, prev > NOISE_FLOOR, delta)
            }
            None => (None, None, None, false, None),
        };
        rows.push(IterationRow {
            ell,
            lambdas: step.ritz.values.clone(),
            residuals: residuals.clone(),
            energy_err,
            measured_rate: measured,
            theo_rate: theo,
            delta,
            alpha: alphas(p, &step.next)?,
            enriched_dim: step.enriched.cols(),
            rate_resolved: resolved,
        });
        u = normalized_columns(p, &step.next)?;
        last_ritz = Some(step.ritz);
        let worst = residuals.iter().cloned().fold(0.0, f64::max);
        if let Some(s) = monitor.update(worst, cfg.residual_tol) {
            status = s;
            break;
        }
    }
    let ritz = last_ritz.expect("at least one outer step");
    Ok(IterationReport {
        algorithm: "alg1".into(),
        n: p.n(),
        k,
        coarse_dim: k_basis.dim(),
        seed: None,
        status,
        iterations: rows.len() - 1,
        final_values: ritz.values.clone(),
        target_index: None,
        tie_events: 0,
        rows,
        meta: BTreeMap::new(),
        final_vectors: Some(ritz.vectors),
    })
}

/// Runs the single-vector method from `u0`. With tracking on, the exact
/// pair is the one whose vector best matches the final Ritz vector in the
/// energy product, and errors and rates are evaluated against it once the
/// iteration has stopped.
pub fn ipm_run_single(
    p: &Pencil,
    k_basis: &Basis,
    u0: &[f64],
    cfg: &IpmConfig,
    solver: &dyn LinearSolver,
    tracker: Option<&Tracker>,
) -> Result<IterationReport> {
    let cfg1 = IpmConfig { k: 1, ..cfg.clone() };
    cfg1.validate(p.n(), k_basis.dim())?;
    let own;
    let tracker = match (cfg.track_exact, tracker) {
        (false, _) => None,
        (true, Some(t)) => Some(t),
        (true, None) => {
            own = Tracker::new(p)?;
            Some(&own)
        }
    };

    struct Record {
        next: Vec<f64>,
        eta: Option<f64>,
        mu_ritz: Vec<f64>,
        ritz_index: usize,
    }

    let mut rows = Vec::new();
    let mut u = u0.to_vec();
    let lam0 = crate::projection::rayleigh_quotient(p, &u)?;
    rows.push(IterationRow {
        ell: 0,
        lambdas: vec![lam0],
        residuals: vec![relative_residual(p, lam0, &u)?],
        energy_err: None,
        measured_rate: None,
        theo_rate: None,
        delta: None,
        alpha: vec![1.0 / norm(&u, p.energy_metric())?],
        enriched_dim: 0,
        rate_resolved: false,
    });

    let mut records = Vec::new();
    let mut monitor = Monitor::new();
    let mut status = RunStatus::MaxIterations;
    let mut ties = 0;
    let mut last = None;
    for ell in 1..=cfg.max_outer {
        let step = ipm_single_step(p, k_basis, &u, solver)?;
        if step.tie {
            ties += 1;
        }
        let res = relative_residual(p, step.lambda, &step.ritz_vector)?;
        let a_norm = norm(&step.next, p.energy_metric())?;
        rows.push(IterationRow {
            ell,
            lambdas: vec![step.lambda],
            residuals: vec![res],
            energy_err: None,
            measured_rate: None,
            theo_rate: None,
            delta: None,
            alpha: vec![1.0 / a_norm],
            enriched_dim: step.enriched.cols(),
            rate_resolved: false,
        });
        if let Some(t) = tracker {
            records.push(Record {
                eta: (step.enriched_ritz.len() > 1)
                    .then(|| t.eta.eta(&step.enriched))
                    .transpose()?,
                next: step.next.clone(),
                mu_ritz: step.enriched_ritz.mu_values.clone(),
                ritz_index: step.ritz_index,
            });
        }
        u = step.next.iter().map(|v| v / a_norm).collect();
        let lambda = step.lambda;
        last = Some((lambda, step.ritz_vector));
        if let Some(s) = monitor.update(res, cfg.residual_tol) {
            status = s;
            break;
        }
    }
    let (lambda, vec) = last.expect("at least one outer step");

    let target = match tracker {
        Some(t) => {
            let j = match_exact(p, &t.exact, &vec)?;
            let uj = t.exact.vector(j);
            let mut prev = single_energy_error(p, uj, u0)?;
            rows[0].energy_err = Some(prev);
            for (row, rec) in rows.iter_mut().skip(1).zip(&records) {
                let err = single_energy_error(p, uj, &rec.next)?;
                row.energy_err = Some(err);
                row.measured_rate = Some(err / prev);
                row.rate_resolved = prev > NOISE_FLOOR;
                row.delta = gap_delta(&rec.mu_ritz, 1.0 / t.exact.values[j], &[rec.ritz_index]).ok();
                row.theo_rate = rec.eta.and_then(|eta| {
                    theoretical_rate_single(&SingleRateInputs {
                        eta,
                        mu_ritz: &rec.mu_ritz,
                        i: rec.ritz_index,
                        lambda: t.exact.values[j],
                        lambda_1: t.exact.values[0],
                    })
                    .ok()
                });
                prev = err;
            }
            Some(j)
        }
        None => None,
    };

    Ok(IterationReport {
        algorithm: "alg2".into(),
        n: p.n(),
        k: 1,
        coarse_dim: k_basis.dim(),
        seed: None,
        status,
        iterations: rows.len() - 1,
        final_values: vec![lambda],
        target_index: target,
        tie_events: ties,
        rows,
        final_vectors: Some(DenseMat::from_columns(p.n(), &[vec])?),
        meta: BTreeMap::new(),
    })
}

/// Exact vector with the largest energy-product overlap with `v`.
pub fn match_exact(p: &Pencil, exact: &ExactEigenSet, v: &[f64]) -> Result<usize> {
    let av = p.a().spmv(v)?;
    let mut best = 0;
    let mut best_ov = -1.0;
    for j in 0..exact.len() {
        let ov = dot(&av, exact.vector(j)).abs();
        if ov > best_ov {
            best_ov = ov;
            best = j;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CgOptions, CgSolver, Metric, SparseSymMatrix};

    fn diag_pencil() -> Pencil {
        let d: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        Pencil::standard(SparseSymMatrix::diagonal(&d))
    }

    fn unit_basis(n: usize, idx: &[usize]) -> Basis {
        let cols: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                v
            })
            .collect();
        orthonormalize(&DenseMat::from_columns(n, &cols).unwrap(), Metric::L2, DROP_TOL).unwrap()
    }

    #[test]
    fn diagonal_ladder_converges_fast() {
        let p = diag_pencil();
        let k = unit_basis(10, &[0, 1, 2, 3]);
        let solver = CgSolver::new(p.a(), CgOptions::default()).unwrap();
        let cfg = IpmConfig {
            k: 2,
            residual_tol: 1e-10,
            track_exact: true,
            ..Default::default()
        };
        let u0 = random_block(&p, 2, 3).unwrap();
        let rep = ipm_run(&p, &k, &u0, &cfg, &solver, None).unwrap();
        assert!(rep.converged());
        assert!(rep.iterations <= 3);
        assert!((rep.final_values[0] - 1.0).abs() < 1e-10);
        assert!((rep.final_values[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn exact_block_is_a_fixed_point() {
        let p = diag_pencil();
        let k = unit_basis(10, &[5, 7]);
        let u = unit_basis(10, &[0, 1]).into_columns();
        let solver = CgSolver::new(p.a(), CgOptions::default()).unwrap();
        let step = ipm_block_step(&p, &k, &u, 2, &solver).unwrap();
        assert!((step.ritz.values[0] - 1.0).abs() < 1e-12);
        assert!((step.ritz.values[1] - 2.0).abs() < 1e-12);
        for a in alphas(&p, &step.next).unwrap() {
            assert!(a <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn single_vector_follows_interior_pair() {
        let p = diag_pencil();
        let k = unit_basis(10, &[0, 1, 3, 4]);
        let mut u0 = vec![0.05; 10];
        u0[2] = 1.0;
        let solver = CgSolver::new(p.a(), CgOptions::default()).unwrap();
        let cfg = IpmConfig {
            residual_tol: 1e-10,
            track_exact: true,
            ..Default::default()
        };
        let rep = ipm_run_single(&p, &k, &u0, &cfg, &solver, None).unwrap();
        assert!(rep.converged());
        assert_eq!(rep.target_index, Some(2));
        assert!((rep.final_values[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = diag_pencil();
        let k = unit_basis(10, &[0, 1, 2]);
        let solver = CgSolver::new(p.a(), CgOptions::default()).unwrap();
        let cfg = IpmConfig {
            k: 1,
            ..Default::default()
        };
        let rep = ipm_run(&p, &k, &random_block(&p, 1, 1).unwrap(), &cfg, &solver, None).unwrap();
        let csv = rep.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "ell,lambda_1,res_1,energy_err,measured_rate,theo_rate"
        );
        assert_eq!(lines.count(), rep.rows.len());
    }

    #[test]
    fn ideal_rate_example_is_finite() {
        let r = ideal_space_rate(1.0, 2.0, 5.0, 1.0, 0.5).unwrap();
        let expect = (1.0f64 + 1.0 / (2.0 * 5.0 * 0.25)).sqrt()
            * 0.5f64.sqrt()
            * (1.0 + 1.0 / (2.0 * 0.5))
            * (1.0f64 / 5.0).sqrt();
        assert!((r - expect).abs() < 1e-15);
        assert!(ideal_space_rate(1.0, 2.0, 5.0, 1.0, 0.0).is_err());
    }
}
