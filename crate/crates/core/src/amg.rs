//! Algebraic multigrid: strength graph, greedy aggregation, tentative
//! prolongation and the resulting hierarchy, used both as a coarse space and
//! as an inner solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverse::{ipm_run, random_block, IpmConfig, IterationReport, Tracker};
use crate::linalg::{orthonormalize, Basis, CsrMatrix, DenseMat, LinearSolver, SparseSymMatrix, DROP_TOL};
use crate::multigrid::{CycleParams, Multigrid};
use crate::pencil::Pencil;

pub const DEFAULT_THETA: f64 = 0.25;
pub const DEFAULT_COARSEST: usize = 16;
/// Largest level on which stalled coarsening is accepted as the coarsest level.
pub const DEFAULT_DIRECT_LIMIT: usize = 512;

/// Strong off-diagonal connections, with `|a_ij|` as edge weight.
#[derive(Clone, Debug, PartialEq)]
pub struct StrengthGraph {
    pub adj: Vec<Vec<(usize, f64)>>,
}

impl StrengthGraph {
    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Unweighted graph from an edge list (test and tooling helper).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i != j {
                adj[i].push((j, 1.0));
                adj[j].push((i, 1.0));
            }
        }
        for a in &mut adj {
            a.sort_by_key(|e| e.0);
            a.dedup_by_key(|e| e.0);
        }
        StrengthGraph { adj }
    }
}

/// Edge `(i, j)` iff `|a_ij| ≥ θ√(a_ii a_jj)`.
pub fn strength_graph(a: &SparseSymMatrix, theta: f64) -> Result<StrengthGraph> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::invalid(format!("strength threshold {theta} outside [0, 1)")));
    }
    let d = a.diag();
    if let Some(i) = d.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::NotPositiveDefinite(format!(
            "diagonal entry {i} is {:e}",
            d[i]
        )));
    }
    let csr = a.csr();
    let adj = (0..a.n())
        .map(|i| {
            let (cols, vals) = csr.row(i);
            cols.iter()
                .zip(vals)
                .filter(|&(&j, &v)| j != i && v != 0.0 && v.abs() >= theta * (d[i] * d[j]).sqrt())
                .map(|(&j, &v)| (j, v.abs()))
                .collect()
        })
        .collect();
    Ok(StrengthGraph { adj })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateSet {
    pub assignment: Vec<usize>,
    pub count: usize,
}

impl AggregateSet {
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &g) in self.assignment.iter().enumerate() {
            out[g].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members().iter().map(Vec::len).collect()
    }
}

/// Two-pass greedy aggregation in vertex order.
pub fn aggregate(g: &StrengthGraph) -> AggregateSet {
    const FREE: usize = usize::MAX;
    let n = g.n();
    let mut assignment = vec![FREE; n];
    let mut count = 0;
    for i in 0..n {
        if assignment[i] != FREE || g.adj[i].iter().any(|&(j, _)| assignment[j] != FREE) {
            continue;
        }
        assignment[i] = count;
        for &(j, _) in &g.adj[i] {
            assignment[j] = count;
        }
        count += 1;
    }
    let first_pass = assignment.clone();
    for i in 0..n {
        if assignment[i] != FREE {
            continue;
        }
        let best = g.adj[i]
            .iter()
            .filter(|&&(j, _)| first_pass[j] != FREE)
            .fold(None, |best: Option<(usize, f64)>, &(j, w)| match best {
                Some((_, bw)) if bw >= w => best,
                _ => Some((first_pass[j], w)),
            });
        assignment[i] = match best {
            Some((agg, _)) => agg,
            None => {
                count += 1;
                count - 1
            }
        };
    }
    AggregateSet { assignment, count }
}

/// Piecewise-constant (or piecewise `near_null`) columns with unit 2-norm.
pub fn tentative_prolongation(aggs: &AggregateSet, near_null: Option<&[f64]>) -> Result<CsrMatrix> {
    let n = aggs.assignment.len();
    if let Some(v) = near_null {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
    }
    let value = |i: usize| near_null.map_or(1.0, |v| v[i]);
    let mut norms = vec![0.0; aggs.count];
    for i in 0..n {
        norms[aggs.assignment[i]] += value(i) * value(i);
    }
    if let Some(a) = norms.iter().position(|&s| s == 0.0) {
        return Err(Error::invalid(format!(
            "near-null vector vanishes on aggregate {a}"
        )));
    }
    let t: Vec<(usize, usize, f64)> = (0..n)
        .map(|i| {
            let a = aggs.assignment[i];
            (i, a, value(i) / norms[a].sqrt())
        })
        .collect();
    CsrMatrix::from_triplets(n, aggs.count, &t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmgParams {
    pub theta: f64,
    pub coarsest: usize,
    pub max_levels: usize,
    pub direct_limit: usize,
    pub near_null: Option<Vec<f64>>,
    pub cycle: CycleParams,
}

impl Default for AmgParams {
    fn default() -> Self {
        AmgParams {
            theta: DEFAULT_THETA,
            coarsest: DEFAULT_COARSEST,
            max_levels: 25,
            direct_limit: DEFAULT_DIRECT_LIMIT,
            near_null: None,
            cycle: CycleParams {
                max_cycles: 1000,
                ..CycleParams::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct AmgLevel {
    pub a: SparseSymMatrix,
    pub m: Option<SparseSymMatrix>,
    /// Maps this level's coarse unknowns back to this level (absent on the coarsest).
    pub p: Option<CsrMatrix>,
    pub aggregates: Option<AggregateSet>,
}

#[derive(Clone, Debug)]
pub struct AmgHierarchy {
    /// Fine to coarse.
    pub levels: Vec<AmgLevel>,
    pub params: AmgParams,
}

pub fn amg_setup(a: &SparseSymMatrix, m: Option<&SparseSymMatrix>, params: AmgParams) -> Result<AmgHierarchy> {
    if let Some(m) = m {
        if m.n() != a.n() {
            return Err(Error::DimensionMismatch {
                expected: a.n(),
                got: m.n(),
            });
        }
    }
    let mut levels = vec![AmgLevel {
        a: a.clone(),
        m: m.cloned(),
        p: None,
        aggregates: None,
    }];
    let mut near_null = params.near_null.clone();
    while levels.last().unwrap().a.n() > params.coarsest && levels.len() < params.max_levels {
        let cur = levels.last_mut().unwrap();
        let n = cur.a.n();
        let aggs = aggregate(&strength_graph(&cur.a, params.theta)?);
        if aggs.count >= n {
            if n <= params.direct_limit {
                break;
            }
            return Err(Error::CoarseningStagnation {
                level: levels.len() - 1,
                n,
            });
        }
        let p = tentative_prolongation(&aggs, near_null.as_deref())?;
        let ac = cur.a.galerkin(&p)?;
        let mc = cur.m.as_ref().map(|m| m.galerkin(&p)).transpose()?;
        // The coarse near-null vector is the exact restriction of the fine one.
        near_null = near_null.map(|v| p.t_matvec(&v)).transpose()?;
        cur.p = Some(p);
        cur.aggregates = Some(aggs);
        levels.push(AmgLevel {
            a: ac.attest_spd(),
            m: mc.map(SparseSymMatrix::attest_spd),
            p: None,
            aggregates: None,
        });
    }
    Ok(AmgHierarchy { levels, params })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmgSummary {
    pub theta: f64,
    pub coarsest_cap: usize,
    pub levels: usize,
    pub sizes: Vec<usize>,
    pub nnz: Vec<usize>,
    pub operator_complexity: f64,
    pub grid_complexity: f64,
}

impl AmgHierarchy {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.a.n()).collect()
    }

    pub fn summary(&self) -> AmgSummary {
        let sizes = self.sizes();
        let nnz: Vec<usize> = self.levels.iter().map(|l| l.a.nnz()).collect();
        AmgSummary {
            theta: self.params.theta,
            coarsest_cap: self.params.coarsest,
            levels: sizes.len(),
            operator_complexity: nnz.iter().sum::<usize>() as f64 / nnz[0] as f64,
            grid_complexity: sizes.iter().sum::<usize>() as f64 / sizes[0] as f64,
            sizes,
            nnz,
        }
    }

    /// Composed prolongation from level `depth` to the finest level.
    pub fn composed_prolongation(&self, depth: usize) -> Result<CsrMatrix> {
        if depth >= self.levels.len() {
            return Err(Error::invalid(format!(
                "depth {depth} out of range (hierarchy has {} levels)",
                self.levels.len()
            )));
        }
        let n = self.levels[0].a.n();
        let mut p = CsrMatrix::identity(n);
        for l in 0..depth {
            p = p.matmul(self.levels[l].p.as_ref().expect("inner level has P"))?;
        }
        Ok(p)
    }

    pub fn vcycle_solver(&self, cycle: CycleParams) -> Result<Multigrid> {
        let ops = self.levels.iter().map(|l| l.a.clone()).collect();
        let ps = self.levels[..self.levels.len() - 1]
            .iter()
            .map(|l| l.p.clone().expect("inner level has P"))
            .collect();
        Multigrid::new(ops, ps, cycle)
    }
}

/// Range of the composed prolongation, orthonormal in the pencil's mass product.
pub fn amg_coarse_space(p: &Pencil, hier: &AmgHierarchy, depth: usize) -> Result<Basis> {
    let pr = hier.composed_prolongation(depth)?;
    if pr.nrows() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: pr.nrows(),
        });
    }
    let w = DenseMat::from_columns(pr.nrows(), &pr.dense_columns())?;
    orthonormalize(&w, p.mass_metric(), DROP_TOL)
}

/// The `nc` lowest exact eigenvectors, mass-orthonormal.
pub fn ideal_coarse_space(p: &Pencil, nc: usize) -> Result<Basis> {
    if nc == 0 || nc >= p.n() {
        return Err(Error::invalid(format!("n_c = {nc} must lie in 1..{}", p.n())));
    }
    let ex = p.exact_eigs()?;
    let mut v = ex.leading(nc);
    for j in 0..nc {
        v.scale_column(j, ex.values[j].sqrt());
    }
    Basis::from_orthonormal(v, p.mass_metric())
}

/// Block inverse power method with an AMG coarse space; inner solves use
/// `solver`, or an AMG V-cycle on the same hierarchy when `None`.
pub fn amg_eigensolve(
    p: &Pencil,
    hier: &AmgHierarchy,
    depth: usize,
    cfg: &IpmConfig,
    seed: u64,
    solver: Option<&dyn LinearSolver>,
    tracker: Option<&Tracker>,
) -> Result<IterationReport> {
    let k_basis = amg_coarse_space(p, hier, depth)?;
    let u0 = random_block(p, cfg.k, seed)?;
    let own;
    let solver = match solver {
        Some(s) => s,
        None => {
            own = hier.vcycle_solver(CycleParams {
                tol: cfg.inner_tol,
                ..hier.params.cycle
            })?;
            &own
        }
    };
    let mut report = ipm_run(p, &k_basis, &u0, cfg, solver, tracker)?;
    report.seed = Some(seed);
    report.meta.insert("theta_s".into(), serde_json::json!(hier.params.theta));
    report.meta.insert("depth".into(), serde_json::json!(depth));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmg::{build_hierarchy, GmgHierarchy, Domain};
    use crate::linalg::{cg_solve, norm2, sub};

    fn laplacian_1d(n: usize) -> SparseSymMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseSymMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn strength_rules() {
        let g = strength_graph(&SparseSymMatrix::diagonal(&[1.0, 2.0, 3.0]), 0.25).unwrap();
        assert_eq!(g.edge_count(), 0);
        let g = strength_graph(&laplacian_1d(6), 0.25).unwrap();
        assert_eq!(g.edge_count(), 5);
        assert!(g.adj[2].iter().map(|e| e.0).eq([1, 3]));
        assert!(strength_graph(&SparseSymMatrix::diagonal(&[1.0, -1.0]), 0.2).is_err());
        assert!(strength_graph(&laplacian_1d(3), 1.0).is_err());
    }

    #[test]
    fn aggregation_examples() {
        let chain = StrengthGraph::from_edges(9, &(0..8).map(|i| (i, i + 1)).collect::<Vec<_>>());
        let a = aggregate(&chain);
        assert_eq!(a.count, 3);
        assert_eq!(a.sizes(), vec![2, 3, 4]);
        assert_eq!(aggregate(&StrengthGraph::from_edges(5, &[])).sizes(), vec![1; 5]);
        let k4 = StrengthGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(aggregate(&k4).count, 1);
    }

    #[test]
    fn tentative_columns() {
        let aggs = AggregateSet {
            assignment: vec![0, 0, 1],
            count: 2,
        };
        let p = tentative_prolongation(&aggs, None).unwrap();
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let want = DenseMat::from_row_major(3, 2, &[c, 0.0, c, 0.0, 0.0, 1.0]).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert!((p.get(i, j) - want[(i, j)]).abs() < 1e-15);
            }
        }
        let ptp = p.to_dense().t_matmul(&p.to_dense()).unwrap();
        assert!(ptp.identity_defect() < 1e-15);
        assert!(tentative_prolongation(&aggs, Some(&[0.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn chain_hierarchy_sizes() {
        let h = amg_setup(&laplacian_1d(255), None, AmgParams::default()).unwrap();
        let s = h.sizes();
        assert_eq!(&s[..3], &[255, 85, 29]);
        assert!(*s.last().unwrap() <= DEFAULT_COARSEST);
        for l in 0..h.len() - 1 {
            let p = h.levels[l].p.as_ref().unwrap();
            let g = h.levels[l].a.galerkin(p).unwrap();
            assert!(g.max_abs_diff(&h.levels[l + 1].a).unwrap() <= 1e-12 * g.max_abs());
        }
    }

    #[test]
    fn amg_vcycle_matches_cg() {
        let a = laplacian_1d(255);
        let h = amg_setup(&a, None, AmgParams::default()).unwrap();
        let tight = CycleParams {
            tol: 1e-14,
            ..h.params.cycle
        };
        let mg = h.vcycle_solver(tight).unwrap();
        let b: Vec<f64> = (0..255).map(|i| ((i * 37) % 19) as f64 - 9.0).collect();
        let x = mg.solve(&b).unwrap();
        let opts = crate::linalg::CgOptions {
            tol: 1e-14,
            ..Default::default()
        };
        let y = cg_solve(&a, &b, opts, None).unwrap().x;
        assert!(norm2(&sub(&x, &y)) <= 1e-10 * norm2(&y));
        assert!(mg.solve(&vec![0.0; 255]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_dimensional_setup_and_contraction() {
        let gh = GmgHierarchy::new(build_hierarchy(Domain::UnitSquare, 1, 6).unwrap()).unwrap();
        let fem = &gh.pencils[5];
        assert_eq!(fem.a.n(), 3969);
        let h = amg_setup(&fem.a, Some(&fem.m), AmgParams::default()).unwrap();
        assert!(h.len() >= 3);
        let mg = h.vcycle_solver(h.params.cycle).unwrap();
        let b: Vec<f64> = (0..3969).map(|i| (((i * 7919) % 211) as f64) / 105.0 - 1.0).collect();
        let rho = mg.contraction(&b, 10).unwrap();
        assert!(rho < 0.7, "contraction {rho}");
    }

    #[test]
    fn stagnation_is_an_error_above_the_direct_limit() {
        let a = SparseSymMatrix::diagonal(&vec![1.0; 40]);
        let params = AmgParams {
            direct_limit: 10,
            ..AmgParams::default()
        };
        assert!(matches!(
            amg_setup(&a, None, params),
            Err(Error::CoarseningStagnation { level: 0, n: 40 })
        ));
        assert_eq!(amg_setup(&a, None, AmgParams::default()).unwrap().len(), 1);
    }

    #[test]
    fn depth_zero_is_full_space() {
        let p = Pencil::standard(laplacian_1d(12));
        let h = amg_setup(p.a(), None, AmgParams { coarsest: 2, ..AmgParams::default() }).unwrap();
        let k = amg_coarse_space(&p, &h, 0).unwrap();
        assert_eq!(k.dim(), 12);
        let k1 = amg_coarse_space(&p, &h, 1).unwrap();
        assert_eq!(k1.dim(), h.levels[1].a.n());
        assert!(amg_coarse_space(&p, &h, h.len()).is_err());
    }
}
