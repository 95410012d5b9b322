use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use subeig::gmg::{fem_pencil, Domain};
use subeig::io::{read_sym_matrix_file, write_matrix_market_file};
use subeig::linalg::SparseSymMatrix;
use subeig::report::to_json17;
use subeig::Pencil;

use crate::exit::{CliResult, Context, Failure};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum ProblemKind {
    /// P1 elements on the unit interval.
    #[value(name = "1d")]
    #[serde(rename = "1d")]
    OneD,
    /// P1 elements on the unit square.
    #[value(name = "2d")]
    #[serde(rename = "2d")]
    TwoD,
    /// Diagonal matrix with the identity as mass.
    #[serde(rename = "diag")]
    Diag,
}

impl ProblemKind {
    pub fn domain(self) -> Option<Domain> {
        match self {
            ProblemKind::OneD => Some(Domain::Interval),
            ProblemKind::TwoD => Some(Domain::UnitSquare),
            ProblemKind::Diag => None,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct GenArgs {
    pub kind: ProblemKind,
    /// Interior unknowns per direction.
    #[arg(long)]
    pub n: Option<usize>,
    /// Interior unknowns per direction on the coarsest mesh.
    #[arg(long)]
    pub n0: Option<usize>,
    /// Uniform refinements applied to the coarsest mesh.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Diagonal entries, either `a..b` (integers, inclusive) or a comma-separated list.
    #[arg(long)]
    pub values: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Reference {
    /// `exact` for the discrete spectrum, `continuous` for the limit of the
    /// discrete eigenvalues under refinement.
    pub kind: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ProblemKind,
    pub domain: Option<Domain>,
    /// Cells per direction.
    pub cells: Option<usize>,
    pub h: Option<f64>,
    pub n: usize,
    #[serde(rename = "A")]
    pub a: String,
    #[serde(rename = "M")]
    pub m: Option<String>,
    pub reference: Reference,
}

pub fn cells_for(n: Option<usize>, n0: Option<usize>, levels: Option<usize>) -> CliResult<usize> {
    let cells = match (n, n0) {
        (Some(n), None) if levels.is_none() => n + 1,
        (None, Some(n0)) => (n0 + 1)
            .checked_mul(1usize.checked_shl(levels.unwrap_or(0) as u32).unwrap_or(0))
            .filter(|&c| c > 0)
            .ok_or_else(|| Failure::config("mesh size overflows"))?,
        _ => return Err(Failure::config("give either --n, or --n0 with optional --levels")),
    };
    if cells < 2 {
        return Err(Failure::config("need at least one interior unknown per direction"));
    }
    Ok(cells)
}

pub fn parse_values(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || Failure::config(format!("cannot parse --values '{spec}'"));
    let values: Vec<f64> = if let Some((a, b)) = spec.split_once("..") {
        let a: i64 = a.trim().parse().map_err(|_| bad())?;
        let b: i64 = b.trim().parse().map_err(|_| bad())?;
        (a..=b).map(|v| v as f64).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<CliResult<_>>()?
    };
    if values.is_empty() {
        return Err(bad());
    }
    if let Some(v) = values.iter().find(|v| v.is_nan() || **v <= 0.0 || v.is_infinite()) {
        return Err(Failure::config(format!("diagonal entry {v} is not positive")));
    }
    Ok(values)
}

fn continuous_values(domain: Domain, cells: usize) -> Vec<f64> {
    let modes = (cells - 1).min(10);
    let mut v: Vec<f64> = match domain {
        Domain::Interval => (1..=modes).map(|j| (j as f64 * PI).powi(2)).collect(),
        Domain::UnitSquare => (1..=modes)
            .flat_map(|i| (1..=modes).map(move |j| PI * PI * (i * i + j * j) as f64))
            .collect(),
    };
    v.sort_by(f64::total_cmp);
    v.truncate(10);
    v
}

pub fn run(args: GenArgs) -> CliResult<i32> {
    std::fs::create_dir_all(&args.out).context(args.out.display())?;
    let a_path = args.out.join("A.mtx");
    let m_path = args.out.join("M.mtx");
    let manifest = match args.kind.domain() {
        Some(domain) => {
            if args.values.is_some() {
                return Err(Failure::config("--values only applies to diag"));
            }
            let cells = cells_for(args.n, args.n0, args.levels)?;
            let fem = fem_pencil(domain, cells)?;
            write_matrix_market_file(fem.a.csr(), &a_path).context(a_path.display())?;
            write_matrix_market_file(fem.m.csr(), &m_path).context(m_path.display())?;
            Manifest {
                kind: args.kind,
                domain: Some(domain),
                cells: Some(cells),
                h: Some(1.0 / cells as f64),
                n: fem.a.n(),
                a: "A.mtx".into(),
                m: Some("M.mtx".into()),
                reference: Reference {
                    kind: "continuous".into(),
                    values: continuous_values(domain, cells),
                },
            }
        }
        None => {
            let spec = args.values.as_deref().ok_or_else(|| Failure::config("diag needs --values"))?;
            let values = parse_values(spec)?;
            let a = SparseSymMatrix::diagonal(&values);
            write_matrix_market_file(a.csr(), &a_path).context(a_path.display())?;
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            Manifest {
                kind: args.kind,
                domain: None,
                cells: None,
                h: None,
                n: values.len(),
                a: "A.mtx".into(),
                m: None,
                reference: Reference {
                    kind: "exact".into(),
                    values: sorted,
                },
            }
        }
    };
    let path = args.out.join(MANIFEST);
    std::fs::write(&path, to_json17(&manifest)?).context(path.display())?;
    println!("wrote {} unknowns to {}", manifest.n, args.out.display());
    Ok(0)
}

pub struct Problem {
    pub manifest: Manifest,
    pub pencil: Pencil,
}

/// Loads a problem from a directory written by `run` or from its manifest.
pub fn read_problem(path: &Path) -> CliResult<Problem> {
    let (dir, manifest_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST))
    } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    };
    let text = std::fs::read_to_string(&manifest_path).context(manifest_path.display())?;
    let manifest: Manifest = serde_json::from_str(&text).context(manifest_path.display())?;
    let a_path = dir.join(&manifest.a);
    let a = read_sym_matrix_file(&a_path).context(a_path.display())?;
    let m = match &manifest.m {
        Some(f) => {
            let p = dir.join(f);
            Some(read_sym_matrix_file(&p).context(p.display())?)
        }
        None => None,
    };
    if a.n() != manifest.n {
        return Err(Failure::config(format!(
            "{}: manifest gives n = {} but A has {} rows",
            manifest_path.display(),
            manifest.n,
            a.n()
        )));
    }
    let pencil = Pencil::new(a, m)?;
    Ok(Problem { manifest, pencil })
}
