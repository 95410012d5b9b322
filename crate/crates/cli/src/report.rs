use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use subeig::inverse::IterationReport;
use subeig::report::to_json17;

use crate::exit::{CliResult, Context, Failure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Summary,
    Csv,
    Json,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ReportArgs {
    /// A solve report, a verify report or a manifest.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "summary")]
    pub format: Format,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn num(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}

fn fnum(v: &Value) -> String {
    v.as_f64().map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

fn iteration_summary(v: &Value) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} on n = {} with dim K = {}, k = {}",
        v["algorithm"].as_str().unwrap_or("?"),
        v["n"],
        v["coarse_dim"],
        v["k"]
    );
    let _ = writeln!(s, "status {} after {} iterations", v["status"].as_str().unwrap_or("?"), v["iterations"]);
    if let Some(vals) = v["final_values"].as_array() {
        for (i, x) in vals.iter().enumerate() {
            let _ = writeln!(s, "  lambda[{}] = {}", i + 1, num(x));
        }
    }
    let rows = v["rows"].as_array().cloned().unwrap_or_default();
    let mut pairs = Vec::new();
    for r in &rows {
        if r["rate_resolved"].as_bool() == Some(true) {
            if let (Some(m), Some(t)) = (r["measured_rate"].as_f64(), r["theo_rate"].as_f64()) {
                pairs.push((r["ell"].clone(), m, t));
            }
        }
    }
    if !pairs.is_empty() {
        let _ = writeln!(s, "  ell  measured      theoretical");
        for (ell, m, t) in &pairs {
            let _ = writeln!(s, "  {ell:>3}  {m:.6e}  {t:.6e}");
        }
        let worst = pairs.iter().map(|(_, m, t)| m / t).fold(0.0f64, f64::max);
        let _ = writeln!(s, "  max measured/theoretical = {worst:.4}");
    }
    if let Some(meta) = v["meta"].as_object() {
        for (k, x) in meta {
            let _ = writeln!(s, "  {k} = {}", x.as_str().map(str::to_string).unwrap_or_else(|| num(x)));
        }
    }
    s
}

fn verify_summary(v: &Value) -> String {
    let checks = v["checks"].as_array().cloned().unwrap_or_default();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "suite {}: {} checks, {} failed, {} skipped: {}",
        v["suite"].as_str().unwrap_or("?"),
        checks.len(),
        v["failures"],
        v["skipped"],
        if v["pass"].as_bool() == Some(true) { "PASS" } else { "FAIL" }
    );
    let tightest = checks
        .iter()
        .filter(|c| c["pass"].as_bool() == Some(true))
        .filter_map(|c| Some((c["lhs"].as_f64()? / c["rhs"].as_f64()?, c)))
        .filter(|(r, _)| r.is_finite())
        .fold(None::<(f64, &Value)>, |best, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        });
    if let Some((r, c)) = tightest {
        let _ = writeln!(s, "  tightest passing check {} (lhs/rhs = {r:.6})", c["name"].as_str().unwrap_or("?"));
    }
    for c in checks.iter().filter(|c| c["pass"].as_bool() != Some(true)) {
        let _ = writeln!(
            s,
            "  FAIL {}: lhs {} rhs {}",
            c["name"].as_str().unwrap_or("?"),
            fnum(&c["lhs"]),
            fnum(&c["rhs"])
        );
    }
    s
}

fn verify_csv(v: &Value) -> String {
    let mut s = String::from("name,lhs,rhs,margin,pass\n");
    for c in v["checks"].as_array().into_iter().flatten() {
        let _ = writeln!(
            s,
            "\"{}\",{},{},{},{}",
            c["name"].as_str().unwrap_or("").replace('"', "\"\""),
            num(&c["lhs"]),
            num(&c["rhs"]),
            num(&c["margin"]),
            c["pass"]
        );
    }
    s
}

fn manifest_summary(v: &Value) -> String {
    let mut s = format!("{} problem with n = {}", v["kind"].as_str().unwrap_or("?"), v["n"]);
    if let Some(h) = v["h"].as_f64() {
        let _ = write!(s, ", h = {h}");
    }
    s.push('\n');
    if let Some(vals) = v["reference"]["values"].as_array() {
        let _ = writeln!(s, "  {} reference values:", v["reference"]["kind"].as_str().unwrap_or(""));
        for x in vals {
            let _ = writeln!(s, "    {}", num(x));
        }
    }
    s
}

pub fn run(args: ReportArgs) -> CliResult<i32> {
    let text = std::fs::read_to_string(&args.input).context(args.input.display())?;
    let v: Value = serde_json::from_str(&text).context(args.input.display())?;
    let kind = if v.get("rows").is_some() {
        "iteration"
    } else if v.get("checks").is_some() {
        "verify"
    } else if v.get("reference").is_some() {
        "manifest"
    } else {
        return Err(Failure::config(format!("{}: not a subeig report", args.input.display())));
    };
    let out = match (args.format, kind) {
        (Format::Json, _) => to_json17(&v)?,
        (Format::Summary, "iteration") => iteration_summary(&v),
        (Format::Summary, "verify") => verify_summary(&v),
        (Format::Summary, _) => manifest_summary(&v),
        (Format::Csv, "iteration") => {
            let r: IterationReport = serde_json::from_value(v).context(args.input.display())?;
            r.to_csv()
        }
        (Format::Csv, "verify") => verify_csv(&v),
        (Format::Csv, _) => return Err(Failure::config("manifests have no CSV form")),
    };
    match &args.out {
        Some(p) => std::fs::write(p, out).context(p.display())?,
        None => print!("{out}"),
    }
    Ok(0)
}
