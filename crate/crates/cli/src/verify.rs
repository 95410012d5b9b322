use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use subeig::report::to_json17;
use subeig::verify::{run_replay, run_suite, Replay, Suite, VerifyParams, VerifyReport};

use crate::exit::{CliResult, Context, Failure, VERIFY_FAILED};

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: subeig::Error| e.to_string())
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// projection, inverse, gmg, amg or all.
    #[arg(value_parser = parse_suite)]
    pub suite: Suite,
    #[arg(long, default_value_t = VerifyParams::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = VerifyParams::default().trials)]
    pub trials: usize,
    /// Problem size; each suite has its own default.
    #[arg(long)]
    pub n: Option<usize>,
    /// Subspace dimension of the random projection instances.
    #[arg(long, default_value_t = VerifyParams::default().m)]
    pub m: usize,
    /// Ideal coarse-space dimensions checked by the amg suite.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
    pub nc_sweep: Vec<usize>,
    /// Estimates whose gap is below this are skipped.
    #[arg(long, default_value_t = VerifyParams::default().gap_min)]
    pub gap_min: f64,
    /// Only the ideal coarse-space checks of the amg suite.
    #[arg(long)]
    pub ideal: bool,
    /// Model problem of the iteration suites (only 1d).
    #[arg(long)]
    pub model: Option<String>,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rerun the trials recorded in a replay file.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Where a failing run writes its replay file.
    #[arg(long)]
    pub replay_out: Option<PathBuf>,
}

impl VerifyArgs {
    fn params(&self) -> CliResult<VerifyParams> {
        if let Some(model) = &self.model {
            if model != "1d" {
                return Err(Failure::config(format!("unsupported model '{model}' (only 1d)")));
            }
        }
        let params = VerifyParams {
            seed: self.seed,
            trials: self.trials,
            n: self.n,
            m: self.m,
            nc_sweep: self.nc_sweep.clone(),
            gap_min: self.gap_min,
            ideal_only: self.ideal,
        };
        params.validate()?;
        Ok(params)
    }
}

fn replay_path(args: &VerifyArgs) -> PathBuf {
    if let Some(p) = &args.replay_out {
        return p.clone();
    }
    match &args.out {
        Some(out) => out.with_extension("replay.json"),
        None => PathBuf::from(format!("subeig-replay-{}.json", args.suite)),
    }
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).context(dir.display())?;
    }
    std::fs::write(path, text).context(path.display())
}

pub fn run(args: VerifyArgs) -> CliResult<i32> {
    let report: VerifyReport = match &args.replay {
        Some(path) => {
            let text = std::fs::read_to_string(path).context(path.display())?;
            let replay: Replay = serde_json::from_str(&text).context(path.display())?;
            run_replay(&replay)?
        }
        None => run_suite(args.suite, &args.params()?)?,
    };
    let json = report.to_json()?;
    match &args.out {
        Some(path) => write(path, &json)?,
        None => print!("{json}"),
    }
    eprintln!(
        "verify {}: {} checks, {} failed, {} skipped",
        report.suite,
        report.checks.len(),
        report.failures,
        report.skipped
    );
    if report.pass {
        return Ok(0);
    }
    for c in report.failing().take(20) {
        eprintln!("  FAIL {}: lhs {:e} > rhs {:e}", c.name, c.lhs, c.rhs);
    }
    if let Some(replay) = report.replay() {
        let path = replay_path(&args);
        write(&path, &to_json17(&replay)?)?;
        eprintln!("replay written to {}", path.display());
    }
    Ok(VERIFY_FAILED)
}
