//! Geometric multigrid backend: nested uniform P1 meshes on `(0, 1)` and the
//! unit square, stiffness/mass assembly with Dirichlet elimination, linear
//! interpolation between levels, and the coarse space `V_H ⊂ V_h`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverse::{ipm_run, random_block, IpmConfig, IterationReport, Tracker};
use crate::linalg::{orthonormalize, Basis, CsrMatrix, DenseMat, SparseSymMatrix, DROP_TOL};
use crate::multigrid::{CycleParams, Multigrid};
use crate::pencil::Pencil;

/// Upper bound on unknowns per level.
pub const MAX_UNKNOWNS: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Interval,
    UnitSquare,
}

impl Domain {
    pub fn dim(self) -> usize {
        match self {
            Domain::Interval => 1,
            Domain::UnitSquare => 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeshLevel {
    pub domain: Domain,
    /// Number of intervals per coordinate direction.
    pub cells: usize,
    /// Grid spacing `1/cells`.
    pub h: f64,
    /// Largest element diameter.
    pub diameter: f64,
    pub coords: Vec<[f64; 2]>,
    /// Vertex triples (2D) or pairs (1D, third entry unused).
    pub elements: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    /// Unknown number of each vertex, `None` on the boundary.
    pub dof: Vec<Option<usize>>,
    pub n_dofs: usize,
}

impl MeshLevel {
    /// Uniform mesh with `cells` intervals per direction.
    pub fn uniform(domain: Domain, cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::invalid("a mesh needs at least 2 cells per direction"));
        }
        let h = 1.0 / cells as f64;
        match domain {
            Domain::Interval => {
                let nv = cells + 1;
                let coords = (0..nv).map(|i| [i as f64 * h, 0.0]).collect();
                let elements = (0..cells).map(|i| [i, i + 1, usize::MAX]).collect();
                let boundary: Vec<bool> = (0..nv).map(|i| i == 0 || i == cells).collect();
                let dof = (0..nv)
                    .map(|i| if boundary[i] { None } else { Some(i - 1) })
                    .collect();
                Ok(MeshLevel {
                    domain,
                    cells,
                    h,
                    diameter: h,
                    coords,
                    elements,
                    boundary,
                    dof,
                    n_dofs: cells - 1,
                })
            }
            Domain::UnitSquare => {
                let s = cells + 1;
                let vid = |i: usize, j: usize| j * s + i;
                let mut coords = Vec::with_capacity(s * s);
                let mut boundary = Vec::with_capacity(s * s);
                let mut dof = Vec::with_capacity(s * s);
                for j in 0..s {
                    for i in 0..s {
                        coords.push([i as f64 * h, j as f64 * h]);
                        let b = i == 0 || j == 0 || i == cells || j == cells;
                        boundary.push(b);
                        dof.push(if b { None } else { Some((j - 1) * (cells - 1) + (i - 1)) });
                    }
                }
                let mut elements = Vec::with_capacity(2 * cells * cells);
                for j in 0..cells {
                    for i in 0..cells {
                        // Each square is split along its (i, j)–(i+1, j+1) diagonal.
                        elements.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
                        elements.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
                    }
                }
                Ok(MeshLevel {
                    domain,
                    cells,
                    h,
                    diameter: h * std::f64::consts::SQRT_2,
                    coords,
                    elements,
                    boundary,
                    dof,
                    n_dofs: (cells - 1) * (cells - 1),
                })
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    /// Coarse to fine.
    pub levels: Vec<MeshLevel>,
}

/// Uniformly refined meshes; `n0` interior vertices per direction on the
/// coarsest level and `n_levels` levels in total.
pub fn build_hierarchy(domain: Domain, n0: usize, n_levels: usize) -> Result<MeshHierarchy> {
    if n0 < 1 {
        return Err(Error::invalid("n0 must be at least 1"));
    }
    if n_levels < 2 {
        return Err(Error::invalid("a hierarchy needs at least 2 levels"));
    }
    let mut levels = Vec::with_capacity(n_levels);
    let mut cells = n0 + 1;
    for l in 0..n_levels {
        let n = (cells - 1).pow(domain.dim() as u32);
        if n > MAX_UNKNOWNS {
            return Err(Error::invalid(format!(
                "level {l} would have {n} unknowns (limit {MAX_UNKNOWNS})"
            )));
        }
        levels.push(MeshLevel::uniform(domain, cells)?);
        cells *= 2;
    }
    Ok(MeshHierarchy { levels })
}

impl MeshHierarchy {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn finest(&self) -> &MeshLevel {
        self.levels.last().expect("nonempty hierarchy")
    }

    pub fn domain(&self) -> Domain {
        self.levels[0].domain
    }
}

/// Stiffness and mass matrices of one level.
#[derive(Clone, Debug)]
pub struct FemPencil {
    pub a: SparseSymMatrix,
    pub m: SparseSymMatrix,
    pub level: usize,
}

impl FemPencil {
    pub fn pencil(&self) -> Pencil {
        Pencil::new(self.a.clone(), Some(self.m.clone())).expect("same level")
    }
}

type Local = ([[f64; 3]; 3], [[f64; 3]; 3], usize);

fn element_matrices(mesh: &MeshLevel, e: usize) -> Result<Local> {
    let el = mesh.elements[e];
    match mesh.domain {
        Domain::Interval => {
            let len = mesh.coords[el[1]][0] - mesh.coords[el[0]][0];
            if !(len > 0.0) {
                return Err(Error::DegenerateElement(e));
            }
            let mut k = [[0.0; 3]; 3];
            let mut m = [[0.0; 3]; 3];
            k[0][0] = 1.0 / len;
            k[1][1] = 1.0 / len;
            k[0][1] = -1.0 / len;
            k[1][0] = -1.0 / len;
            m[0][0] = len / 3.0;
            m[1][1] = len / 3.0;
            m[0][1] = len / 6.0;
            m[1][0] = len / 6.0;
            Ok((k, m, 2))
        }
        Domain::UnitSquare => {
            let p: Vec<[f64; 2]> = el.iter().map(|&v| mesh.coords[v]).collect();
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let area = 0.5 * det.abs();
            if !(area > 1e-14 * mesh.h * mesh.h) {
                return Err(Error::DegenerateElement(e));
            }
            // Gradients of the barycentric coordinates.
            let mut g = [[0.0; 2]; 3];
            for a in 0..3 {
                let b = (a + 1) % 3;
                let c = (a + 2) % 3;
                g[a] = [(p[b][1] - p[c][1]) / det, (p[c][0] - p[b][0]) / det];
            }
            let mut k = [[0.0; 3]; 3];
            let mut m = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                    m[a][b] = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                }
            }
            Ok((k, m, 3))
        }
    }
}

/// P1 stiffness and mass with boundary unknowns eliminated.
pub fn assemble_p1(mesh: &MeshLevel, level: usize) -> Result<FemPencil> {
    const CHUNK: usize = 4096;
    type Triplets = Vec<(usize, usize, f64)>;
    let chunks: Vec<Result<(Triplets, Triplets)>> = (0..mesh.elements.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|ids| {
            let mut ka = Vec::new();
            let mut ma = Vec::new();
            for &e in ids {
                let (k, m, nloc) = element_matrices(mesh, e)?;
                let el = mesh.elements[e];
                for a in 0..nloc {
                    let Some(ra) = mesh.dof[el[a]] else { continue };
                    for b in 0..nloc {
                        let Some(cb) = mesh.dof[el[b]] else { continue };
                        ka.push((ra, cb, k[a][b]));
                        ma.push((ra, cb, m[a][b]));
                    }
                }
            }
            Ok((ka, ma))
        })
        .collect();
    let mut kt = Vec::new();
    let mut mt = Vec::new();
    // Chunks are concatenated in element order, so the summation order is fixed.
    for c in chunks {
        let (ka, ma) = c?;
        kt.extend(ka);
        mt.extend(ma);
    }
    let a = SparseSymMatrix::from_triplets(mesh.n_dofs, &kt)?.attest_spd();
    let m = SparseSymMatrix::from_triplets(mesh.n_dofs, &mt)?.attest_spd();
    Ok(FemPencil { a, m, level })
}

/// Pencil of a single uniform mesh.
pub fn fem_pencil(domain: Domain, cells: usize) -> Result<FemPencil> {
    assemble_p1(&MeshLevel::uniform(domain, cells)?, 0)
}

/// Linear interpolation from level `l` to level `l + 1` on interior unknowns.
pub fn prolongation(coarse: &MeshLevel, fine: &MeshLevel) -> Result<CsrMatrix> {
    if fine.cells != 2 * coarse.cells || fine.domain != coarse.domain {
        return Err(Error::invalid("levels are not a uniform refinement pair"));
    }
    let mut t = Vec::new();
    match fine.domain {
        Domain::Interval => {
            for fi in 1..fine.cells {
                let row = fine.dof[fi].expect("interior");
                let mut add = |ci: usize, w: f64| {
                    if let Some(c) = coarse.dof[ci] {
                        t.push((row, c, w));
                    }
                };
                if fi % 2 == 0 {
                    add(fi / 2, 1.0);
                } else {
                    add(fi / 2, 0.5);
                    add(fi / 2 + 1, 0.5);
                }
            }
        }
        Domain::UnitSquare => {
            let fs = fine.cells + 1;
            let cs = coarse.cells + 1;
            for fj in 1..fine.cells {
                for fi in 1..fine.cells {
                    let row = fine.dof[fj * fs + fi].expect("interior");
                    let mut add = |ci: usize, cj: usize, w: f64| {
                        if let Some(c) = coarse.dof[cj * cs + ci] {
                            t.push((row, c, w));
                        }
                    };
                    match (fi % 2, fj % 2) {
                        (0, 0) => add(fi / 2, fj / 2, 1.0),
                        (1, 0) => {
                            add(fi / 2, fj / 2, 0.5);
                            add(fi / 2 + 1, fj / 2, 0.5);
                        }
                        (0, 1) => {
                            add(fi / 2, fj / 2, 0.5);
                            add(fi / 2, fj / 2 + 1, 0.5);
                        }
                        _ => {
                            // Midpoint of the element diagonal.
                            add(fi / 2, fj / 2, 0.5);
                            add(fi / 2 + 1, fj / 2 + 1, 0.5);
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(fine.n_dofs, coarse.n_dofs, &t)
}

/// Pencils and prolongations of a whole hierarchy.
#[derive(Clone, Debug)]
pub struct GmgHierarchy {
    pub mesh: MeshHierarchy,
    pub pencils: Vec<FemPencil>,
    /// `prolongations[l]` maps level `l` to level `l + 1`.
    pub prolongations: Vec<CsrMatrix>,
}

impl GmgHierarchy {
    pub fn new(mesh: MeshHierarchy) -> Result<Self> {
        let pencils = mesh
            .levels
            .iter()
            .enumerate()
            .map(|(l, m)| assemble_p1(m, l))
            .collect::<Result<Vec<_>>>()?;
        let prolongations = mesh
            .levels
            .windows(2)
            .map(|w| prolongation(&w[0], &w[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(GmgHierarchy {
            mesh,
            pencils,
            prolongations,
        })
    }

    /// Hierarchy from `coarse_cells` up to `fine_cells` intervals per direction.
    pub fn between(domain: Domain, coarse_cells: usize, fine_cells: usize) -> Result<Self> {
        let mut levels = 1;
        let mut c = coarse_cells;
        while c < fine_cells {
            c *= 2;
            levels += 1;
        }
        if coarse_cells < 2 || c != fine_cells || levels < 2 {
            return Err(Error::invalid(format!(
                "{fine_cells} cells is not a refinement of {coarse_cells} cells"
            )));
        }
        GmgHierarchy::new(build_hierarchy(domain, coarse_cells - 1, levels)?)
    }

    pub fn finest_level(&self) -> usize {
        self.pencils.len() - 1
    }

    /// Composed interpolation from `coarse` to `target`.
    pub fn composed_prolongation(&self, target: usize, coarse: usize) -> Result<CsrMatrix> {
        if coarse >= target || target >= self.pencils.len() {
            return Err(Error::invalid(format!(
                "need coarse < target < {} (got coarse = {coarse}, target = {target})",
                self.pencils.len()
            )));
        }
        let mut p = self.prolongations[coarse].clone();
        for l in (coarse + 1)..target {
            p = self.prolongations[l].matmul(&p)?;
        }
        Ok(p)
    }

    /// `V_H` on level `target`, mass-orthonormalized.
    pub fn coarse_space(&self, target: usize, coarse: usize) -> Result<Basis> {
        let p = self.composed_prolongation(target, coarse)?;
        let w = DenseMat::from_columns(p.nrows(), &p.dense_columns())?;
        let m = &self.pencils[target].m;
        orthonormalize(&w, crate::linalg::Metric::Mass(m), DROP_TOL)
    }

    /// V-cycle on levels `0..=target` with a direct solve on level 0.
    pub fn vcycle_solver(&self, target: usize, params: CycleParams) -> Result<Multigrid> {
        let ops = (0..=target).rev().map(|l| self.pencils[l].a.clone()).collect();
        let prolongations = (0..target).rev().map(|l| self.prolongations[l].clone()).collect();
        Multigrid::new(ops, prolongations, params)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GmgRun {
    pub report: IterationReport,
    #[serde(rename = "H")]
    pub coarse_h: f64,
    pub h: f64,
    /// Some resolved contraction was at least 1.
    pub mesh_condition_violated: bool,
}

/// A measured contraction of at least one means the coarse mesh is too coarse.
pub fn mesh_condition_violated(report: &IterationReport) -> bool {
    report
        .rows
        .iter()
        .filter(|r| r.rate_resolved)
        .filter_map(|r| r.measured_rate)
        .any(|r| r >= 1.0)
}

/// Block inverse power method on the finest level with `K = V_H` from
/// `coarse_level` and V-cycle inner solves.
pub fn gmg_eigensolve(
    hier: &GmgHierarchy,
    coarse_level: usize,
    cfg: &IpmConfig,
    seed: u64,
    tracker: Option<&Tracker>,
) -> Result<GmgRun> {
    let fine = hier.finest_level();
    let k_basis = hier.coarse_space(fine, coarse_level)?;
    if cfg.k >= k_basis.dim() {
        return Err(Error::invalid(format!(
            "k = {} must be below dim(V_H) = {}",
            cfg.k,
            k_basis.dim()
        )));
    }
    let pencil = hier.pencils[fine].pencil();
    let solver = hier.vcycle_solver(
        fine,
        CycleParams {
            tol: cfg.inner_tol,
            ..CycleParams::default()
        },
    )?;
    let u0 = random_block(&pencil, cfg.k, seed)?;
    let mut report = ipm_run(&pencil, &k_basis, &u0, cfg, &solver, tracker)?;
    report.seed = Some(seed);
    let coarse_h = hier.mesh.levels[coarse_level].h;
    let h = hier.mesh.levels[fine].h;
    let mut meta = BTreeMap::new();
    meta.insert("H".to_string(), serde_json::json!(coarse_h));
    meta.insert("h".to_string(), serde_json::json!(h));
    report.meta = meta;
    Ok(GmgRun {
        mesh_condition_violated: mesh_condition_violated(&report),
        report,
        coarse_h,
        h,
    })
}
