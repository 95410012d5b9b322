//! Randomized numerical verification of the projection and iteration
//! estimates. Every check records both sides of an inequality; a check
//! passes when `lhs ≤ rhs·(1 + 1e−9) + 1e−12`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amg::{amg_coarse_space, amg_setup, ideal_coarse_space, AmgParams};
use crate::error::{Error, Result};
use crate::gmg::{fem_pencil, gmg_eigensolve, Domain, GmgHierarchy};
use crate::inverse::{
    ideal_space_rate, ipm_run, ipm_run_single, random_block, IpmConfig, IterationReport, Tracker,
};
use crate::linalg::{
    dense_sym_eigvals, dot, norm, norm2, orthonormalize, Basis, CgOptions, CgSolver, DenseMat, Metric,
    SparseSymMatrix, DROP_TOL,
};
use crate::pencil::{ExactEigenSet, Pencil};
use crate::projection::{
    energy_bound_block, energy_bound_single, eta_k_oracle, holds, rayleigh_quotient, ritz,
    strang_residual_with, EnergyProjector, EtaOracle,
};

/// Relative tolerance of the full-space oracle comparison.
pub const ORACLE_TOL: f64 = 1e-10;
/// Scale of the Strang residual tolerance `tol·(|λ̃_j| + |λ|)·‖u‖₂`.
pub const STRANG_TOL: f64 = 1e-10;
/// Relative agreement required between converged and oracle eigenvalues.
pub const EIG_MATCH_TOL: f64 = 1e-8;
pub const ETA_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub margin: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Check {
            name: name.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs.is_finite() && !rhs.is_nan() && holds(lhs, rhs),
        }
    }

    fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}{}", self.name);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Projection,
    Inverse,
    Gmg,
    Amg,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Projection => "projection",
            Suite::Inverse => "inverse",
            Suite::Gmg => "gmg",
            Suite::Amg => "amg",
            Suite::All => "all",
        }
    }

    fn members(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![Suite::Projection, Suite::Inverse, Suite::Gmg, Suite::Amg],
            s => vec![s],
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 1
    }

    fn trial_cap(self) -> usize {
        match self {
            Suite::Projection => usize::MAX,
            Suite::Inverse => 12,
            Suite::Gmg | Suite::Amg => 3,
            Suite::All => 0,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projection" => Ok(Suite::Projection),
            "inverse" => Ok(Suite::Inverse),
            "gmg" => Ok(Suite::Gmg),
            "amg" => Ok(Suite::Amg),
            "all" => Ok(Suite::All),
            other => Err(Error::invalid(format!("unknown suite '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyParams {
    pub seed: u64,
    pub trials: usize,
    /// Problem size; each suite has its own default when absent.
    pub n: Option<usize>,
    /// Subspace dimension of the random projection instances.
    pub m: usize,
    pub nc_sweep: Vec<usize>,
    /// Estimates whose gap `δ` falls below this are skipped.
    pub gap_min: f64,
    /// Restrict the amg suite to the eigenvector coarse spaces.
    #[serde(default)]
    pub ideal_only: bool,
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams {
            seed: 20240601,
            trials: 20,
            n: None,
            m: 8,
            nc_sweep: vec![4, 8, 16],
            gap_min: 1e-3,
            ideal_only: false,
        }
    }
}

impl VerifyParams {
    fn n_for(&self, suite: Suite) -> usize {
        self.n.unwrap_or(match suite {
            Suite::Projection => 24,
            Suite::Inverse | Suite::Gmg => 63,
            _ => 80,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if !(self.gap_min >= 0.0) {
            return Err(Error::invalid("gap_min must be nonnegative"));
        }
        Ok(())
    }
}

/// Seed of one trial, derived from the master seed and the suite.
pub fn trial_seed(master: u64, suite: Suite, trial: usize) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(suite.stream());
    r.set_word_pos(2 * trial as u128);
    r.next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialId {
    pub suite: Suite,
    pub trial: usize,
    pub seed: u64,
}

/// Everything needed to rerun the failing trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub params: VerifyParams,
    pub trials: Vec<TrialId>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub params: VerifyParams,
    pub checks: Vec<Check>,
    /// Estimates not evaluated because of a gap below `gap_min`.
    pub skipped: usize,
    pub failures: usize,
    pub pass: bool,
    pub failed_trials: Vec<TrialId>,
}

impl VerifyReport {
    pub fn replay(&self) -> Option<Replay> {
        (!self.failed_trials.is_empty()).then(|| Replay {
            params: self.params.clone(),
            trials: self.failed_trials.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        crate::report::to_json17(self)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrialOutcome {
    pub checks: Vec<Check>,
    pub skipped: usize,
}

impl TrialOutcome {
    fn extend(&mut self, other: TrialOutcome) {
        self.checks.extend(other.checks);
        self.skipped += other.skipped;
    }
}

fn assemble(suite: Suite, params: &VerifyParams, ids: Vec<TrialId>) -> VerifyReport {
    let outcomes: Vec<(TrialId, TrialOutcome)> = ids
        .into_par_iter()
        .map(|id| {
            let out = run_trial(params, &id).unwrap_or_else(|e| TrialOutcome {
                checks: vec![Check {
                    name: "error".into(),
                    lhs: f64::NAN,
                    rhs: f64::NAN,
                    margin: f64::NAN,
                    pass: false,
                }
                .prefixed(&format!("{}#{}/{e}: ", id.suite, id.trial))],
                skipped: 0,
            });
            (id, out)
        })
        .collect();
    let mut checks = Vec::new();
    let mut skipped = 0;
    let mut failed_trials = Vec::new();
    for (id, out) in outcomes {
        if out.checks.iter().any(|c| !c.pass) {
            failed_trials.push(id);
        }
        skipped += out.skipped;
        checks.extend(out.checks);
    }
    let failures = checks.iter().filter(|c| !c.pass).count();
    VerifyReport {
        suite,
        params: params.clone(),
        checks,
        skipped,
        failures,
        pass: failures == 0,
        failed_trials,
    }
}

/// Runs a suite; trials execute in parallel and are reported in order.
pub fn run_suite(suite: Suite, params: &VerifyParams) -> Result<VerifyReport> {
    params.validate()?;
    let ids = suite
        .members()
        .into_iter()
        .flat_map(|s| {
            (0..params.trials.min(s.trial_cap())).map(move |t| TrialId {
                suite: s,
                trial: t,
                seed: trial_seed(params.seed, s, t),
            })
        })
        .collect();
    Ok(assemble(suite, params, ids))
}

/// Reruns exactly the trials listed in a replay file.
pub fn run_replay(replay: &Replay) -> Result<VerifyReport> {
    replay.params.validate()?;
    let suite = match replay.trials.as_slice() {
        [first, rest @ ..] if rest.iter().all(|t| t.suite == first.suite) => first.suite,
        _ => Suite::All,
    };
    Ok(assemble(suite, &replay.params, replay.trials.clone()))
}

pub fn run_trial(params: &VerifyParams, id: &TrialId) -> Result<TrialOutcome> {
    let prefix = format!("{}#{}/", id.suite, id.trial);
    let mut out = match id.suite {
        Suite::Projection => projection_trial(params, id)?,
        Suite::Inverse => inverse_trial(params, id)?,
        Suite::Gmg => gmg_trial(params, id)?,
        Suite::Amg => amg_trial(params, id)?,
        Suite::All => return Err(Error::invalid("'all' is not a trial suite")),
    };
    out.checks = out.checks.into_iter().map(|c| c.prefixed(&prefix)).collect();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Random instances

fn uniform_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DenseMat> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DenseMat::from_col_major(rows, cols, data)
}

fn symmetric_from(d: &DenseMat) -> Result<SparseSymMatrix> {
    let n = d.rows();
    let mut t = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            t.push((i, j, 0.5 * (d[(i, j)] + d[(j, i)])));
        }
    }
    SparseSymMatrix::from_triplets(n, &t)
}

/// `QΛQᵀ` with Haar-like `Q` and eigenvalues drawn from `[1, 50]`.
pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Result<SparseSymMatrix> {
    let q = orthonormalize(&uniform_matrix(n, n, rng)?, Metric::L2, DROP_TOL)?.into_columns();
    if q.cols() != n {
        return Err(Error::RankDeficient("random orthogonal factor".into()));
    }
    let lam: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..50.0)).collect();
    let mut ql = q.clone();
    for (j, &l) in lam.iter().enumerate() {
        ql.scale_column(j, l);
    }
    symmetric_from(&ql.matmul(&q.transpose())?)
}

/// `½I + RRᵀ/n`.
pub fn random_mass(n: usize, rng: &mut ChaCha8Rng) -> Result<SparseSymMatrix> {
    let r = uniform_matrix(n, n, rng)?;
    let mut m = r.matmul(&r.transpose())?;
    for j in 0..n {
        m.scale_column(j, 1.0 / n as f64);
    }
    let mut d = m;
    for i in 0..n {
        let v = d[(i, i)] + 0.5;
        d.col_mut(i)[i] = v;
    }
    symmetric_from(&d)
}

pub fn random_pencil(n: usize, generalized: bool, rng: &mut ChaCha8Rng) -> Result<Pencil> {
    let a = random_spd(n, rng)?.attest_spd();
    if generalized {
        Pencil::new(a, Some(random_mass(n, rng)?.attest_spd()))
    } else {
        Ok(Pencil::standard(a))
    }
}

/// Random `m`-dimensional subspace, orthonormal in the pencil's mass product.
pub fn random_subspace(p: &Pencil, m: usize, rng: &mut ChaCha8Rng) -> Result<Basis> {
    let b = orthonormalize(&uniform_matrix(p.n(), m, rng)?, p.mass_metric(), DROP_TOL)?;
    if b.dim() != m {
        return Err(Error::RankDeficient(format!("random subspace has rank {} < {m}", b.dim())));
    }
    Ok(b)
}

// ---------------------------------------------------------------------------
// Projection checks

/// Ritz values on the full space against the dense oracle, as a maximal
/// relative deviation.
pub fn oracle_check(p: &Pencil) -> Result<Check> {
    let full = orthonormalize(&DenseMat::identity(p.n()), p.mass_metric(), DROP_TOL)?;
    let r = ritz(p, &full)?;
    let reference = match p.m() {
        None => dense_sym_eigvals(&p.a().to_dense())?,
        Some(_) => p.exact_eigs()?.values,
    };
    let dev = r
        .values
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max);
    Ok(Check::new("oracle", dev, ORACLE_TOL))
}

/// Upper-bound, Strang, single and block error estimates for one `(p, K)`.
pub fn projection_checks(p: &Pencil, k: &Basis, exact: &ExactEigenSet, gap_min: f64) -> Result<TrialOutcome> {
    let m = k.dim();
    let n = p.n();
    let r = ritz(p, k)?;
    let eta = EtaOracle::new(p)?.eta(k.columns())?;
    let proj = EnergyProjector::new(p.a(), k.columns())?;
    let mut out = TrialOutcome::default();

    for i in 0..m.min(n) {
        out.checks.push(Check::new(format!("upper_bound[{i}]"), exact.values[i], r.values[i]));
    }
    for i in 0..n {
        let u = exact.vector(i);
        let un = norm2(u);
        for j in 0..m {
            let res = strang_residual_with(p, &proj, exact.values[i], u, &r, j)?;
            let tol = STRANG_TOL * (r.values[j].abs() + exact.values[i].abs()) * un;
            out.checks.push(Check::new(format!("strang[{i},{j}]"), res, tol));
        }
    }
    for i in 0..m.min(n) {
        let rep = match energy_bound_single(p, k, eta, exact.values[i], exact.vector(i), &r, i) {
            // A one-dimensional K leaves no other Ritz value to define the gap.
            Err(Error::EmptyCandidates) => {
                out.skipped += 1;
                continue;
            }
            rep => rep?,
        };
        if rep.delta < gap_min {
            out.skipped += 1;
            continue;
        }
        out.checks.push(Check::new(format!("energy[{i}]"), rep.lhs_energy, rep.rhs_energy));
        out.checks.push(Check::new(format!("l2[{i}]"), rep.lhs_l2, rep.rhs_l2));
    }
    for kk in 1..=5.min(m.saturating_sub(1)) {
        let us = exact.leading(kk);
        let reps = energy_bound_block(p, k, eta, &exact.values, &us, &r, kk)?;
        if reps.iter().any(|b| b.delta < gap_min) {
            out.skipped += 1;
            continue;
        }
        for b in reps {
            let i = b.index;
            out.checks.push(Check::new(format!("block_energy[{kk},{i}]"), b.lhs_energy, b.rhs_energy));
            out.checks.push(Check::new(format!("block_l2[{kk},{i}]"), b.lhs_l2, b.rhs_l2));
        }
    }
    Ok(out)
}

/// Both sides of `0 ≤ λ̂ − λ_i ≤ ‖u_i − ψ‖²_A/‖ψ‖²_M` for
/// `ψ = u_i + εw` with `w` mass-orthogonal to `u_0..u_{i−1}`.
pub fn rayleigh_checks(
    p: &Pencil,
    exact: &ExactEigenSet,
    i: usize,
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<[Check; 2]> {
    let n = p.n();
    let scale = exact.values[i].sqrt();
    let u: Vec<f64> = exact.vector(i).iter().map(|v| v * scale).collect();
    let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for _ in 0..2 {
        for j in 0..i {
            let s = exact.values[j].sqrt();
            let uj: Vec<f64> = exact.vector(j).iter().map(|v| v * s).collect();
            let c = dot(&w, &p.apply_m(&uj)?);
            for (a, b) in w.iter_mut().zip(&uj) {
                *a -= c * b;
            }
        }
    }
    let wn = norm(&w, p.mass_metric())?;
    let psi: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + eps * b / wn).collect();
    let lam_hat = rayleigh_quotient(p, &psi)?;
    let diff: Vec<f64> = u.iter().zip(&psi).map(|(a, b)| a - b).collect();
    let bound = norm(&diff, p.energy_metric())?.powi(2) / norm(&psi, p.mass_metric())?.powi(2);
    Ok([
        Check::new(format!("rayleigh_lower[{i}]"), exact.values[i], lam_hat),
        Check::new(format!("rayleigh_upper[{i}]"), lam_hat - exact.values[i], bound),
    ])
}

fn projection_trial(params: &VerifyParams, id: &TrialId) -> Result<TrialOutcome> {
    let n = params.n_for(Suite::Projection);
    let m = params.m;
    if m >= n {
        return Err(Error::invalid(format!("m = {m} must be below n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(id.seed);
    let p = random_pencil(n, id.trial % 2 == 1, &mut rng)?;
    let exact = p.exact_eigs()?;
    let k = random_subspace(&p, m, &mut rng)?;
    let mut out = TrialOutcome {
        checks: vec![oracle_check(&p)?],
        skipped: 0,
    };
    out.extend(projection_checks(&p, &k, &exact, params.gap_min)?);
    let i = rng.gen_range(0..n.min(4));
    let eps = 10f64.powf(rng.gen_range(-3.0..-0.3));
    out.checks.extend(rayleigh_checks(&p, &exact, i, eps, &mut rng)?);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Inverse power method checks

/// Per-iteration rate, normalization and upper-bound checks of a tracked run.
pub fn run_checks(report: &IterationReport, exact: &ExactEigenSet, residual_tol: f64, label: &str) -> Vec<Check> {
    let mut out = Vec::new();
    for (ell, measured, theo) in report.rate_pairs() {
        out.push(Check::new(format!("{label}/rate[{ell}]"), measured, theo));
    }
    let target = report.target_index;
    for row in report.rows.iter().skip(1) {
        let a = row.alpha.iter().cloned().fold(0.0, f64::max);
        out.push(Check::new(format!("{label}/alpha[{}]", row.ell), a, 1.0 + 1e-12));
        for (i, &l) in row.lambdas.iter().enumerate() {
            let j = target.unwrap_or(i);
            // The block method's Ritz values bound the exact ones from above.
            if target.is_none() || j == 0 {
                out.push(Check::new(format!("{label}/upper[{},{i}]", row.ell), exact.values[j], l));
            }
        }
    }
    let worst = report
        .rows
        .last()
        .map(|r| r.residuals.iter().cloned().fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY);
    out.push(Check::new(format!("{label}/converged"), worst, residual_tol));
    for (i, &l) in report.final_values.iter().take(report.k).enumerate() {
        let j = target.unwrap_or(i);
        let dev = (l - exact.values[j]).abs() / exact.values[j];
        out.push(Check::new(format!("{label}/oracle[{j}]"), dev, EIG_MATCH_TOL));
    }
    out
}

/// Initial guess dominated by the exact vector `i`.
pub fn biased_guess(p: &Pencil, exact: &ExactEigenSet, i: usize, weight: f64, seed: u64) -> Result<Vec<f64>> {
    let r = random_block(p, 1, seed)?;
    let s = exact.values[i].sqrt();
    Ok(exact
        .vector(i)
        .iter()
        .zip(r.col(0))
        .map(|(u, w)| s * u + weight * w)
        .collect())
}

fn model_hierarchy(n: usize, ratio: usize) -> Result<GmgHierarchy> {
    let cells = n + 1;
    if !cells.is_multiple_of(ratio) || cells / ratio < 2 {
        return Err(Error::invalid(format!(
            "n + 1 = {cells} must be a multiple of {ratio} with at least 2 coarse cells"
        )));
    }
    GmgHierarchy::between(Domain::Interval, cells / ratio, cells)
}

fn inverse_trial(params: &VerifyParams, id: &TrialId) -> Result<TrialOutcome> {
    let n = params.n_for(Suite::Inverse);
    let hier = model_hierarchy(n, 8)?;
    let fine = hier.finest_level();
    let p = hier.pencils[fine].pencil();
    let kb = hier.coarse_space(fine, 0)?;
    let tracker = Tracker::new(&p)?;
    let solver = CgSolver::new(p.a(), CgOptions::default())?;
    let k = 1 + id.trial % 3;
    let cfg = IpmConfig {
        k,
        track_exact: true,
        ..IpmConfig::default()
    };
    let u0 = random_block(&p, k, id.seed)?;
    let rep = ipm_run(&p, &kb, &u0, &cfg, &solver, Some(&tracker))?;
    let mut checks = run_checks(&rep, &tracker.exact, cfg.residual_tol, &format!("block[k={k}]"));

    let target = id.trial % 2;
    let g = biased_guess(&p, &tracker.exact, target, 0.3, id.seed ^ 0x5eed)?;
    let single = ipm_run_single(&p, &kb, &g, &cfg, &solver, Some(&tracker))?;
    let label = format!("single[i={target}]");
    let hit = (single.target_index == Some(target)) as u8 as f64;
    checks.push(Check::new(format!("{label}/target"), 1.0 - hit, 0.0));
    checks.extend(run_checks(&single, &tracker.exact, cfg.residual_tol, &label));
    Ok(TrialOutcome { checks, skipped: 0 })
}

// ---------------------------------------------------------------------------
// Geometric multigrid checks

fn galerkin_checks(hier: &GmgHierarchy, label: &str) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (l, p) in hier.prolongations.iter().enumerate() {
        let (f, c) = (&hier.pencils[l + 1], &hier.pencils[l]);
        for (name, fine, coarse) in [("A", &f.a, &c.a), ("M", &f.m, &c.m)] {
            let d = fine.galerkin(p)?.max_abs_diff(coarse)?;
            out.push(Check::new(format!("{label}/galerkin_{name}[{l}]"), d, 1e-12 * coarse.max_abs()));
        }
    }
    Ok(out)
}

fn refinement_checks(domain: Domain, cells: &[usize], label: &str) -> Result<Vec<Check>> {
    let mut prev: Option<Vec<f64>> = None;
    let mut out = Vec::new();
    for &c in cells {
        let vals = fem_pencil(domain, c)?.pencil().exact_eigs()?.values;
        if let Some(pv) = &prev {
            for i in 0..3 {
                out.push(Check::new(format!("{label}/monotone[{c},{i}]"), vals[i], pv[i]));
            }
        }
        prev = Some(vals);
    }
    Ok(out)
}

fn gmg_trial(params: &VerifyParams, id: &TrialId) -> Result<TrialOutcome> {
    let mut checks = Vec::new();
    if id.trial == 0 {
        checks.extend(galerkin_checks(&GmgHierarchy::between(Domain::Interval, 2, 64)?, "1d")?);
        checks.extend(galerkin_checks(&GmgHierarchy::between(Domain::UnitSquare, 2, 16)?, "2d")?);
        checks.extend(refinement_checks(Domain::Interval, &[8, 16, 32, 64], "1d")?);
        checks.extend(refinement_checks(Domain::UnitSquare, &[4, 8, 16], "2d")?);
    }
    let n = params.n_for(Suite::Gmg);
    let cfg = IpmConfig {
        k: 3,
        track_exact: true,
        ..IpmConfig::default()
    };
    let mut rates = Vec::new();
    let mut tracker = None;
    for ratio in [8, 4] {
        let hier = model_hierarchy(n, ratio)?;
        if tracker.is_none() {
            tracker = Some(Tracker::new(&hier.pencils[hier.finest_level()].pencil())?);
        }
        let t = tracker.as_ref().expect("tracker set");
        let run = gmg_eigensolve(&hier, 0, &cfg, id.seed, Some(t))?;
        let label = format!("H={}h", ratio);
        checks.extend(run_checks(&run.report, &t.exact, cfg.residual_tol, &label));
        rates.push(run.report.mean_measured_rate(0).unwrap_or(f64::NAN));
    }
    // Halving H must cut the measured contraction by at least 20%.
    checks.push(Check::new("h_scaling", rates[1], 0.8 * rates[0]));
    Ok(TrialOutcome { checks, skipped: 0 })
}

// ---------------------------------------------------------------------------
// Algebraic multigrid checks

/// `η_K ≤ 1/√λ_{nc+1}` and measured contraction below the ideal-space factor.
pub fn ideal_space_checks(
    p: &Pencil,
    tracker: &Tracker,
    nc: usize,
    k: usize,
    seed: u64,
    label: &str,
) -> Result<Vec<Check>> {
    let exact = &tracker.exact;
    let kb = ideal_coarse_space(p, nc)?;
    let eta = tracker.eta.eta(kb.columns())?;
    let mut out = vec![Check::new(
        format!("{label}/eta"),
        eta,
        1.0 / exact.values[nc].sqrt() + ETA_SLACK,
    )];
    let cfg = IpmConfig {
        k,
        track_exact: true,
        ..IpmConfig::default()
    };
    let solver = CgSolver::new(p.a(), CgOptions::default())?;
    let rep = ipm_run(p, &kb, &random_block(p, k, seed)?, &cfg, &solver, Some(tracker))?;
    for row in rep.rows.iter().filter(|r| r.rate_resolved) {
        let (Some(measured), Some(delta)) = (row.measured_rate, row.delta) else { continue };
        let factor = ideal_space_rate(
            exact.values[k - 1],
            exact.values[k],
            exact.values[nc],
            row.lambdas[k - 1],
            delta,
        )?;
        out.push(Check::new(format!("{label}/rate[{}]", row.ell), measured, factor));
    }
    out.push(Check::new(
        format!("{label}/oracle"),
        (rep.final_values[k - 1] - exact.values[k - 1]).abs() / exact.values[k - 1],
        EIG_MATCH_TOL,
    ));
    Ok(out)
}

fn amg_trial(params: &VerifyParams, id: &TrialId) -> Result<TrialOutcome> {
    let n = params.n_for(Suite::Amg);
    let fem = fem_pencil(Domain::Interval, n + 1)?;
    let p = fem.pencil();
    let mut checks = Vec::new();
    if id.trial == 0 && !params.ideal_only {
        let h = amg_setup(&fem.a, Some(&fem.m), AmgParams::default())?;
        for (l, lev) in h.levels.iter().enumerate().take(h.len() - 1) {
            let aggs = lev.aggregates.as_ref().expect("inner level");
            let total: usize = aggs.sizes().iter().sum();
            let empty = aggs.sizes().iter().filter(|&&s| s == 0).count();
            checks.push(Check::new(format!("partition[{l}]"), (total.abs_diff(lev.a.n()) + empty) as f64, 0.0));
            let pd = lev.p.as_ref().expect("inner level").to_dense();
            checks.push(Check::new(format!("tentative_orth[{l}]"), pd.t_matmul(&pd)?.identity_defect(), 1e-14));
            let next = &h.levels[l + 1];
            let pm = lev.p.as_ref().expect("inner level");
            let da = lev.a.galerkin(pm)?.max_abs_diff(&next.a)?;
            checks.push(Check::new(format!("galerkin_A[{l}]"), da, 1e-12 * next.a.max_abs()));
            if let (Some(mf), Some(mc)) = (&lev.m, &next.m) {
                let dm = mf.galerkin(pm)?.max_abs_diff(mc)?;
                checks.push(Check::new(format!("galerkin_M[{l}]"), dm, 1e-12 * mc.max_abs()));
            }
        }
        // Coarser aggregation levels give slower contraction.
        if h.len() >= 3 {
            let cfg = IpmConfig {
                k: 2,
                track_exact: true,
                ..IpmConfig::default()
            };
            let tracker = Tracker::new(&p)?;
            let solver = CgSolver::new(p.a(), CgOptions::default())?;
            let mut rates = Vec::new();
            for depth in [1, 2] {
                let kb = amg_coarse_space(&p, &h, depth)?;
                let rep = ipm_run(&p, &kb, &random_block(&p, 2, id.seed)?, &cfg, &solver, Some(&tracker))?;
                checks.extend(run_checks(&rep, &tracker.exact, cfg.residual_tol, &format!("depth={depth}")));
                rates.push(rep.mean_measured_rate(0).unwrap_or(f64::NAN));
            }
            checks.push(Check::new("depth_monotone", rates[0], rates[1] + 0.05));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(id.seed);
    let random = random_pencil(n, true, &mut rng)?;
    for (name, pencil) in [("fem", &p), ("random", &random)] {
        let tracker = Tracker::new(pencil)?;
        for &nc in &params.nc_sweep {
            let k = nc.min(3);
            if nc + k >= pencil.n() {
                continue;
            }
            checks.extend(ideal_space_checks(pencil, &tracker, nc, k, id.seed, &format!("{name}/ideal[nc={nc}]"))?);
        }
    }
    Ok(TrialOutcome { checks, skipped: 0 })
}

/// The `η_K` of an ideal space without running the method.
pub fn ideal_eta(p: &Pencil, nc: usize) -> Result<f64> {
    eta_k_oracle(p, &ideal_coarse_space(p, nc)?)
}
