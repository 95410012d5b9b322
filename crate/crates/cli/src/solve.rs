use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use subeig::amg::{amg_coarse_space, amg_setup, ideal_coarse_space, AmgHierarchy, AmgParams, DEFAULT_THETA};
use subeig::gmg::{fem_pencil, Domain, GmgHierarchy};
use subeig::inverse::{
    ipm_run, ipm_run_single, random_block, InnerSolverKind, IpmConfig, IterationReport, RunStatus, Tracker,
};
use subeig::io::{read_matrix_market_file, read_sym_matrix_file, read_vector_file};
use subeig::linalg::{
    orthonormalize, Basis, CgOptions, CgSolver, DenseMat, LinearSolver, DEFAULT_CG_TOL, DROP_TOL,
};
use subeig::multigrid::CycleParams;
use subeig::projection::ritz;
use subeig::Pencil;

use crate::exit::{CliResult, Context, Failure, DEGENERATE, NO_CONVERGENCE};
use crate::gen::{read_problem, ProblemKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alg {
    /// Block method for the k smallest pairs.
    Alg1,
    /// Single-vector method for one selected pair.
    Alg2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseSource {
    /// Coarse finite element space (generated problems only).
    Gmg,
    /// Aggregation prolongation.
    Amg,
    /// Span of the first nc exact eigenvectors.
    Ideal,
    /// Columns read from a Matrix Market file.
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inner {
    Cg,
    Gmg,
    Amg,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SolveArgs {
    /// Directory (or manifest) written by `gen`.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Stiffness matrix in Matrix Market format.
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Mass matrix; the identity when absent.
    #[arg(long)]
    pub m: Option<PathBuf>,
    /// Assemble a model problem in memory.
    #[arg(long, value_enum)]
    pub model: Option<ProblemKind>,
    /// Interior unknowns per direction for `--model`.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum, default_value = "alg1")]
    pub alg: Alg,
    /// Source of K; gmg for generated meshes, amg otherwise.
    #[arg(long, value_enum)]
    pub coarse: Option<CoarseSource>,
    /// Number of pairs computed by alg1.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Pair selected by alg2, counted from 1.
    #[arg(long, default_value_t = 1)]
    pub target_index: usize,
    /// H/h for the gmg coarse space (a power of two).
    #[arg(long, default_value_t = 8)]
    pub coarse_ratio: usize,
    /// Number of aggregation levels composed into the amg coarse space.
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Strength-of-connection threshold.
    #[arg(long, default_value_t = DEFAULT_THETA)]
    pub theta: f64,
    /// Dimension of the ideal coarse space.
    #[arg(long, default_value_t = 8)]
    pub nc: usize,
    /// Matrix Market file whose columns span K.
    #[arg(long)]
    pub coarse_file: Option<PathBuf>,
    /// Inner solver; follows the coarse source when absent.
    #[arg(long, value_enum)]
    pub inner: Option<Inner>,
    #[arg(long, default_value_t = DEFAULT_CG_TOL)]
    pub inner_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub residual_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Record errors and contraction rates against the dense oracle.
    #[arg(long)]
    pub track_exact: bool,
    /// Starting vector for alg2 instead of the coarse Ritz vector.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Writes `<out>.json` and `<out>.csv`; the JSON goes to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Loaded {
    pencil: Pencil,
    fem: Option<(Domain, usize)>,
    label: String,
}

fn load(args: &SolveArgs) -> CliResult<Loaded> {
    let given = [args.problem.is_some(), args.a.is_some(), args.model.is_some()];
    if given.iter().filter(|&&g| g).count() != 1 {
        return Err(Failure::config("give exactly one of --problem, --a or --model"));
    }
    if args.m.is_some() && args.a.is_none() {
        return Err(Failure::config("--m needs --a"));
    }
    if let Some(path) = &args.problem {
        let prob = read_problem(path)?;
        let fem = prob.manifest.domain.zip(prob.manifest.cells);
        return Ok(Loaded {
            pencil: prob.pencil,
            fem,
            label: path.display().to_string(),
        });
    }
    if let Some(a_path) = &args.a {
        let a = read_sym_matrix_file(a_path).context(a_path.display())?;
        let m = match &args.m {
            Some(p) => Some(read_sym_matrix_file(p).context(p.display())?),
            None => None,
        };
        return Ok(Loaded {
            pencil: Pencil::new(a, m)?,
            fem: None,
            label: a_path.display().to_string(),
        });
    }
    let kind = args.model.unwrap();
    let domain = kind
        .domain()
        .ok_or_else(|| Failure::config("--model takes 1d or 2d"))?;
    let n = args.n.ok_or_else(|| Failure::config("--model needs --n"))?;
    let cells = crate::gen::cells_for(Some(n), None, None)?;
    Ok(Loaded {
        pencil: fem_pencil(domain, cells)?.pencil(),
        fem: Some((domain, cells)),
        label: format!("{}-{n}", serde_json::to_value(kind)?.as_str().unwrap_or("model")),
    })
}

/// Hierarchy from the coarsest mesh the fine mesh refines.
fn gmg_hierarchy(loaded: &Loaded) -> CliResult<GmgHierarchy> {
    let (domain, cells) = loaded
        .fem
        .ok_or_else(|| Failure::config("gmg needs a generated finite element problem"))?;
    let mut coarsest = cells;
    while coarsest % 2 == 0 && coarsest / 2 >= 2 {
        coarsest /= 2;
    }
    let hier = GmgHierarchy::between(domain, coarsest, cells)?;
    let fine = &hier.pencils[hier.finest_level()];
    let scale = fine.a.max_abs();
    let same_a = fine.a.max_abs_diff(loaded.pencil.a()).ok().is_some_and(|d| d <= 1e-12 * scale);
    let same_m = match loaded.pencil.m() {
        Some(m) => fine.m.max_abs_diff(m).ok().is_some_and(|d| d <= 1e-12 * fine.m.max_abs()),
        None => false,
    };
    if !(same_a && same_m) {
        return Err(Failure::config("problem matrices do not match the mesh in the manifest"));
    }
    Ok(hier)
}

fn gmg_coarse_level(hier: &GmgHierarchy, ratio: usize) -> CliResult<usize> {
    let fine = hier.finest_level();
    let steps = ratio.trailing_zeros() as usize;
    if !ratio.is_power_of_two() || ratio < 2 || steps > fine {
        return Err(Failure::config(format!(
            "--coarse-ratio {ratio} must be a power of two between 2 and {}",
            1usize << fine
        )));
    }
    Ok(fine - steps)
}

fn file_coarse_space(p: &Pencil, path: &PathBuf) -> CliResult<Basis> {
    let w = read_matrix_market_file(path).context(path.display())?;
    if w.nrows() != p.n() {
        return Err(Failure::config(format!(
            "{}: {} rows, the problem has {}",
            path.display(),
            w.nrows(),
            p.n()
        )));
    }
    let dense = DenseMat::from_columns(p.n(), &w.dense_columns())?;
    Ok(orthonormalize(&dense, p.mass_metric(), DROP_TOL)?)
}

pub fn run(args: SolveArgs) -> CliResult<i32> {
    let loaded = load(&args)?;
    let p = &loaded.pencil;
    let coarse = args.coarse.unwrap_or(if loaded.fem.is_some() {
        CoarseSource::Gmg
    } else {
        CoarseSource::Amg
    });
    let inner = args.inner.unwrap_or(match coarse {
        CoarseSource::Gmg => Inner::Gmg,
        CoarseSource::Amg => Inner::Amg,
        _ => Inner::Cg,
    });
    let gmg = if coarse == CoarseSource::Gmg || inner == Inner::Gmg {
        Some(gmg_hierarchy(&loaded)?)
    } else {
        None
    };
    let amg: Option<AmgHierarchy> = if coarse == CoarseSource::Amg || inner == Inner::Amg {
        let params = AmgParams {
            theta: args.theta,
            ..AmgParams::default()
        };
        Some(amg_setup(p.a(), p.m(), params)?)
    } else {
        None
    };

    let mut meta = serde_json::Map::new();
    meta.insert("problem".into(), json!(loaded.label));
    meta.insert("coarse".into(), serde_json::to_value(coarse)?);
    meta.insert("inner".into(), serde_json::to_value(inner)?);
    let k_basis = match coarse {
        CoarseSource::Gmg => {
            let hier = gmg.as_ref().unwrap();
            let level = gmg_coarse_level(hier, args.coarse_ratio)?;
            meta.insert("H".into(), json!(hier.mesh.levels[level].h));
            meta.insert("h".into(), json!(hier.mesh.finest().h));
            hier.coarse_space(hier.finest_level(), level)?
        }
        CoarseSource::Amg => {
            meta.insert("theta_s".into(), json!(args.theta));
            meta.insert("depth".into(), json!(args.depth));
            amg_coarse_space(p, amg.as_ref().unwrap(), args.depth)?
        }
        CoarseSource::Ideal => {
            meta.insert("nc".into(), json!(args.nc));
            ideal_coarse_space(p, args.nc)?
        }
        CoarseSource::File => {
            let path = args
                .coarse_file
                .as_ref()
                .ok_or_else(|| Failure::config("--coarse file needs --coarse-file"))?;
            file_coarse_space(p, path)?
        }
    };

    let solver: Box<dyn LinearSolver + '_> = match inner {
        Inner::Cg => Box::new(CgSolver::new(
            p.a(),
            CgOptions {
                tol: args.inner_tol,
                ..CgOptions::default()
            },
        )?),
        Inner::Gmg => {
            let hier = gmg.as_ref().unwrap();
            Box::new(hier.vcycle_solver(
                hier.finest_level(),
                CycleParams {
                    tol: args.inner_tol,
                    ..CycleParams::default()
                },
            )?)
        }
        Inner::Amg => {
            let hier = amg.as_ref().unwrap();
            Box::new(hier.vcycle_solver(CycleParams {
                tol: args.inner_tol,
                ..hier.params.cycle
            })?)
        }
    };
    let cfg = IpmConfig {
        k: if args.alg == Alg::Alg1 { args.k } else { 1 },
        max_outer: args.max_outer,
        residual_tol: args.residual_tol,
        inner_solver: match inner {
            Inner::Cg => InnerSolverKind::Cg,
            Inner::Gmg => InnerSolverKind::GmgVcycle,
            Inner::Amg => InnerSolverKind::AmgVcycle,
        },
        inner_tol: args.inner_tol,
        track_exact: args.track_exact,
    };
    let tracker = if args.track_exact {
        Some(Tracker::new(p)?)
    } else {
        None
    };

    let mut report = match args.alg {
        Alg::Alg1 => {
            let u0 = random_block(p, cfg.k, args.seed)?;
            ipm_run(p, &k_basis, &u0, &cfg, solver.as_ref(), tracker.as_ref())?
        }
        Alg::Alg2 => {
            let u0 = match &args.init {
                Some(path) => {
                    let v = read_vector_file(path).context(path.display())?;
                    if v.len() != p.n() {
                        return Err(Failure::config(format!(
                            "{}: {} entries, the problem has {}",
                            path.display(),
                            v.len(),
                            p.n()
                        )));
                    }
                    v
                }
                None => {
                    let rs = ritz(p, &k_basis)?;
                    let t = args.target_index;
                    if t == 0 || t > rs.len() {
                        return Err(Failure::config(format!(
                            "--target-index must be between 1 and dim K = {}",
                            rs.len()
                        )));
                    }
                    meta.insert("target_requested".into(), json!(t));
                    rs.vector(t - 1).to_vec()
                }
            };
            ipm_run_single(p, &k_basis, &u0, &cfg, solver.as_ref(), tracker.as_ref())?
        }
    };
    report.seed = Some(args.seed);
    report.meta.extend(meta);
    emit(&report, args.out.as_ref())?;
    summarize(&report);
    Ok(match report.status {
        RunStatus::Converged => 0,
        RunStatus::MaxIterations | RunStatus::Stagnated => NO_CONVERGENCE,
        RunStatus::Diverged => DEGENERATE,
    })
}

fn emit(report: &IterationReport, out: Option<&PathBuf>) -> CliResult<()> {
    let json = report.to_json()?;
    match out {
        Some(prefix) => {
            if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).context(dir.display())?;
            }
            let j = prefix.with_extension("json");
            let c = prefix.with_extension("csv");
            std::fs::write(&j, json).context(j.display())?;
            std::fs::write(&c, report.to_csv()).context(c.display())?;
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn summarize(report: &IterationReport) {
    let status = serde_json::to_value(report.status).ok();
    let status = status.as_ref().and_then(|s| s.as_str()).unwrap_or("?");
    eprintln!(
        "{}: {status} after {} iterations (n = {}, dim K = {})",
        report.algorithm, report.iterations, report.n, report.coarse_dim
    );
    for (i, v) in report.final_values.iter().enumerate() {
        eprintln!("  lambda[{}] = {v:.12e}", i + 1);
    }
    if let Some(t) = report.target_index {
        eprintln!("  matched exact pair {}", t + 1);
    }
}
