use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use subeig::gmg::{fem_pencil, Domain};
use subeig::io::read_sym_matrix_file;
use subeig::verify::{trial_seed, Replay, Suite, TrialId, VerifyParams};

fn subeig(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subeig"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_1d_writes_the_assembled_pencil() {
    let dir = tempfile::tempdir().unwrap();
    let o = subeig(&["gen", "1d", "--n", "31", "--out", "p"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let p = dir.path().join("p");
    let manifest = json(&p.join("manifest.json"));
    assert_eq!(manifest["n"], 31);
    assert_eq!(manifest["h"].as_f64().unwrap(), 1.0 / 32.0);
    assert_eq!(manifest["domain"], "interval");
    let fem = fem_pencil(Domain::Interval, 32).unwrap();
    let a = read_sym_matrix_file(p.join("A.mtx")).unwrap();
    let m = read_sym_matrix_file(p.join("M.mtx")).unwrap();
    assert_eq!(a.max_abs_diff(&fem.a).unwrap(), 0.0);
    assert_eq!(m.max_abs_diff(&fem.m).unwrap(), 0.0);
    assert_eq!(a.get(0, 0), 64.0);
    assert_eq!(a.get(0, 1), -32.0);
}

#[test]
fn gen_2d_counts_refinements() {
    let dir = tempfile::tempdir().unwrap();
    let o = subeig(&["gen", "2d", "--n0", "1", "--levels", "4", "--out", "."], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["n"], 961);
    assert_eq!(manifest["cells"], 32);
    let first = manifest["reference"]["values"][0].as_f64().unwrap();
    assert!((first - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
}

#[test]
fn gen_diag_uses_the_given_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = subeig(&["gen", "diag", "--values", "1..10", "--out", "d"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = json(&dir.path().join("d/manifest.json"));
    assert_eq!(manifest["M"], Value::Null);
    assert_eq!(manifest["reference"]["kind"], "exact");
    let a = read_sym_matrix_file(dir.path().join("d/A.mtx")).unwrap();
    assert_eq!(a.n(), 10);
    assert_eq!(a.nnz(), 10);
    assert_eq!(a.get(9, 9), 10.0);
    let bad = subeig(&["gen", "diag", "--values", "0,1"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn block_solve_with_gmg_coarse_space_converges() {
    let dir = tempfile::tempdir().unwrap();
    subeig(&["gen", "1d", "--n", "63", "--out", "p"], dir.path());
    let o = subeig(
        &["solve", "--problem", "p", "--alg", "alg1", "--coarse", "gmg", "--k", "3", "--out", "run"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(&dir.path().join("run.json"));
    assert_eq!(report["status"], "converged");
    assert_eq!(report["k"], 3);
    assert_eq!(report["meta"]["H"].as_f64().unwrap(), 1.0 / 8.0);
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert!(csv.starts_with("ell,lambda_1,lambda_2,lambda_3,res_1"));
    let fine = fem_pencil(Domain::Interval, 64).unwrap().pencil();
    let exact = fine.exact_eigs().unwrap();
    for i in 0..3 {
        let v = report["final_values"][i].as_f64().unwrap();
        assert!((v - exact.values[i]).abs() <= 1e-8 * exact.values[i]);
    }
}

#[test]
fn single_vector_solve_reaches_the_targeted_pair() {
    let dir = tempfile::tempdir().unwrap();
    let o = subeig(
        &[
            "solve", "--model", "1d", "--n", "127", "--alg", "alg2", "--target-index", "2", "--track-exact", "--out",
            "r",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(&dir.path().join("r.json"));
    assert_eq!(report["target_index"], 1);
    let exact = fem_pencil(Domain::Interval, 128).unwrap().pencil().exact_eigs().unwrap();
    let v = report["final_values"][0].as_f64().unwrap();
    assert!((v - exact.values[1]).abs() <= 1e-8 * exact.values[1]);
}

#[test]
fn amg_ideal_and_file_coarse_spaces_on_matrix_files() {
    let dir = tempfile::tempdir().unwrap();
    subeig(&["gen", "diag", "--values", "1..40", "--out", "d"], dir.path());
    subeig(&["gen", "1d", "--n", "63", "--out", "p"], dir.path());
    let amg = subeig(&["solve", "--a", "p/A.mtx", "--m", "p/M.mtx", "--k", "2"], dir.path());
    assert_eq!(amg.status.code(), Some(0), "{}", stderr(&amg));
    let report: Value = serde_json::from_slice(&amg.stdout).unwrap();
    assert_eq!(report["meta"]["coarse"], "amg");
    let ideal = subeig(&["solve", "--a", "d/A.mtx", "--coarse", "ideal", "--nc", "4", "--k", "2"], dir.path());
    assert_eq!(ideal.status.code(), Some(0), "{}", stderr(&ideal));
    std::fs::write(
        dir.path().join("k.mtx"),
        "%%MatrixMarket matrix coordinate real general\n40 2 2\n1 1 1\n2 2 1\n",
    )
    .unwrap();
    let file = subeig(
        &["solve", "--a", "d/A.mtx", "--coarse", "file", "--coarse-file", "k.mtx", "--k", "1"],
        dir.path(),
    );
    assert_eq!(file.status.code(), Some(0), "{}", stderr(&file));
    let report: Value = serde_json::from_slice(&file.stdout).unwrap();
    assert_eq!(report["final_values"][0].as_f64().unwrap(), 1.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("ns.mtx"),
        "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 2\n1 2 1\n2 2 2\n",
    )
    .unwrap();
    let o = subeig(&["solve", "--a", "ns.mtx"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not symmetric"), "{}", stderr(&o));

    subeig(&["gen", "1d", "--n", "63", "--out", "p"], dir.path());
    let o = subeig(&["solve", "--problem", "p", "--max-outer", "1"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = subeig(&["solve", "--a", "p/A.mtx", "--m", "p/M.mtx", "--coarse", "gmg"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = subeig(&["solve", "--problem", "p", "--coarse-ratio", "3"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = subeig(&["verify", "nonsense"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_subeig"))
        .args(["verify", "projection", "--trials", "1"])
        .env("SUBEIG_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    subeig(&["gen", "1d", "--n", "63", "--out", "p"], dir.path());
    std::fs::write(dir.path().join("c.json"), r#"{"problem": "p", "k": 2, "coarse-ratio": 4, "seed": 9}"#).unwrap();
    let o = subeig(&["solve", "--config", "c.json", "--k", "3", "--out", "r"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(&dir.path().join("r.json"));
    assert_eq!(report["k"], 3);
    assert_eq!(report["seed"], 9);
    assert_eq!(report["meta"]["H"].as_f64().unwrap(), 1.0 / 16.0);

    std::fs::write(dir.path().join("bad.json"), r#"{"no_such_option": 1}"#).unwrap();
    let o = subeig(&["solve", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_option"));
}

#[test]
fn verify_report_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let o = subeig(&["verify", "projection", "--trials", "5", "--n", "16", "--out", "v.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(&dir.path().join("v.json"));
    assert_eq!(report["pass"], true);
    assert!(!report["checks"].as_array().unwrap().is_empty());
    assert!(!dir.path().join("v.replay.json").exists());

    let params = VerifyParams {
        trials: 5,
        n: Some(16),
        ..VerifyParams::default()
    };
    let replay = Replay {
        trials: vec![TrialId {
            suite: Suite::Projection,
            trial: 3,
            seed: trial_seed(params.seed, Suite::Projection, 3),
        }],
        params,
    };
    std::fs::write(dir.path().join("r.json"), serde_json::to_string(&replay).unwrap()).unwrap();
    let o = subeig(&["verify", "projection", "--replay", "r.json", "--out", "again.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let again = json(&dir.path().join("again.json"));
    let same_trial = |v: &Value| -> Vec<Value> {
        v["checks"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|c| c["name"].as_str().unwrap().starts_with("projection#3/"))
            .cloned()
            .collect()
    };
    assert_eq!(same_trial(&report), same_trial(&again));
    assert_eq!(same_trial(&again).len(), again["checks"].as_array().unwrap().len());
}

#[test]
fn report_summaries_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    subeig(&["gen", "1d", "--n", "63", "--out", "p"], dir.path());
    subeig(&["solve", "--problem", "p", "--k", "2", "--track-exact", "--out", "r"], dir.path());
    let o = subeig(&["report", "r.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("status converged"), "{text}");
    assert!(text.contains("max measured/theoretical"), "{text}");

    let o = subeig(&["report", "r.json", "--format", "csv"], dir.path());
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv, std::fs::read_to_string(dir.path().join("r.csv")).unwrap());

    subeig(&["verify", "projection", "--trials", "2", "--out", "v.json"], dir.path());
    let o = subeig(&["report", "v.json", "--format", "csv"], dir.path());
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("name,lhs,rhs,margin,pass\n"));
    let o = subeig(&["report", "p/manifest.json"], dir.path());
    assert!(String::from_utf8(o.stdout).unwrap().contains("continuous reference values"));
}
