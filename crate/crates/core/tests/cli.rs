use std::path::Path;
use std::process::Command;

use pharmonic::analysis::classify_regime;
use pharmonic::cli::config::ConfigMap;
use pharmonic::io::read_profile_csv;
use pharmonic::{Problem, TerminationEvent, Warp};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pharmonic"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_hyperbolic_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "n = 3\np = 3\nsource = hyperbolic\ntarget = hyperbolic\nalpha0 = 1\nrmax = 20\n",
    );
    let (code, _, err) = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let report = json(&out.join("report.json"));
    assert_eq!(report["regime"], "AsymptoticIdentity");
    let solution = json(&out.join("solution.json"));
    assert!(solution["startup"]["max_residual"].as_f64().unwrap() < 1e-6);
    assert!(solution["startup"]["alpha_pp0"].is_number());
    assert_eq!(solution["termination"]["event"], "ReachedRMax");
    let csv = std::fs::read_to_string(out.join("profile.csv")).unwrap();
    assert!(csv.starts_with("r,alpha,alpha_prime,theta\n"));
}

#[test]
fn solve_euclidean_linear_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let (code, _, err) = run(&[
        "solve", "--n", "3", "--p", "4", "--source", "euclidean", "--target", "euclidean", "--alpha0", "0.5",
        "--rmax", "10", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(out.join("profile.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - 0.5 * v[0]).abs() < 1e-10, "{line}");
        rows += 1;
    }
    assert!(rows > 10);
}

#[test]
fn missing_p_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 3\nsource = hyperbolic\ntarget = hyperbolic\nalpha0 = 1\nrmax = 5\n");
    let (code, _, err) = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("`p`"), "{err}");
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 3\np = 4\nsource = euclidean\ntarget = euclidean\nalpha0 = 1\nrmax = 5\n");
    let out = dir.path().join("o");
    let (code, _, err) = run(&[
        "solve", "--config", cfg.to_str().unwrap(), "--alpha0", "0.25", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let solution = json(&out.join("solution.json"));
    assert_eq!(solution["startup"]["alpha0"], 0.25);
}

#[test]
fn bad_tolerance_and_unknown_warp_exit_2() {
    let base = ["solve", "--n", "3", "--p", "3", "--alpha0", "1", "--rmax", "5"];
    let (code, _, err) = run(&[&base[..], &["--source", "hyperbolic", "--target", "hyperbolic", "--tol", "0.5"]].concat());
    assert_eq!(code, 2);
    assert!(err.contains("tol"), "{err}");
    let (code, _, err) = run(&[&base[..], &["--source", "spiral", "--target", "hyperbolic"]].concat());
    assert_eq!(code, 2);
    assert!(err.contains("source"), "{err}");
}

#[test]
fn solver_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // Power(2) is not usable for the singular startup.
    let (code, _, _) = run(&[
        "solve", "--n", "3", "--p", "4", "--source", "power:m=2", "--target", "euclidean", "--alpha0", "1",
        "--rmax", "5", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
}

fn phase_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn hyperbolic_sweep_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n = 3\np = 3\nsource = hyperbolic\ntarget = hyperbolic\nalpha0 = 1\nrmax = 30\n[sweep]\nalpha0 = 0.5, 1.0, 2.0\n",
    );
    let mut tables = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("jobs{jobs}"));
        let (code, _, err) = run(&[
            "sweep", "--config", cfg.to_str().unwrap(), "--jobs", jobs, "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
        tables.push(std::fs::read(out.join("phase.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    let rows = phase_rows(&dir.path().join("jobs1/phase.csv"));
    assert_eq!(rows[0], ["n", "p", "alpha0", "regime", "exponent", "termination", "note"]);
    let regimes: Vec<&str> = rows[1..].iter().map(|r| r[3].as_str()).collect();
    assert_eq!(regimes, ["Bounded", "AsymptoticIdentity", "SuperIdentity"]);
    let alphas: Vec<&str> = rows[1..].iter().map(|r| r[2].as_str()).collect();
    assert_eq!(alphas, ["0.5", "1", "2"]);
}

#[test]
fn power_family_sweep_matches_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n = 3\np = 4\nsource = power:m=1\ntarget = euclidean\nstart.r = 1\nstart.alpha = 0.5\nstart.alpha_prime = 0.5\nrmax = 200\n[sweep]\nsource.m = 1, 2\n",
    );
    let out = dir.path().join("o");
    let (code, _, err) = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rows = phase_rows(&out.join("phase.csv"));
    assert_eq!(rows[0][3], "source.m");
    let (n, q) = (3.0, 2.0);
    for row in &rows[1..] {
        let delta: f64 = row[3].parse().unwrap();
        let bounded = (n - 1.0) * delta > 2.0 * q - 1.0;
        assert_eq!(row[4] == "Bounded", bounded, "{row:?}");
        assert_ne!(row[4], "Undetermined", "{row:?}");
    }
}

#[test]
fn sweep_failures_are_rows_and_empty_axis_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n = 3\np = 4\nsource = power:m=1\ntarget = euclidean\nalpha0 = 0.5\nrmax = 10\n[sweep]\nsource.m = 1, 2\n",
    );
    let out = dir.path().join("o");
    let (code, _, err) = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rows = phase_rows(&out.join("phase.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2][4], "Undetermined");
    assert_eq!(rows[2][6], "Failed");

    let empty = write_config(
        dir.path(),
        "n = 3\np = 4\nsource = euclidean\ntarget = euclidean\nalpha0 = 0.5\nrmax = 10\n[sweep]\nalpha0 =\n",
    );
    let (code, _, err) = run(&["sweep", "--config", empty.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("sweep.alpha0"), "{err}");
    let none = write_config(dir.path(), "n = 3\np = 4\nsource = euclidean\ntarget = euclidean\nalpha0 = 0.5\nrmax = 10\n");
    let (code, _, _) = run(&["sweep", "--config", none.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn builtin_verify_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, err) = run(&["verify", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}{err}");
    let report = json(&dir.path().join("verify.json"));
    assert_eq!(report["passed"], true);
    let cases = report["cases"].as_array().unwrap();
    let mut ran = std::collections::BTreeSet::new();
    for case in cases {
        for check in case["checks"].as_array().unwrap() {
            if check["status"] == "pass" {
                ran.insert(check["name"].as_str().unwrap().to_owned());
            }
        }
    }
    for name in [
        "monotonicity",
        "energy_slope_bounds",
        "cone_bound",
        "cone_separation",
        "energy_floor",
        "vanishing_order",
        "barrier_invariance",
        "no_recrossing",
    ] {
        assert!(ran.contains(name), "{name} never passed anywhere");
    }
}

#[test]
fn cone_check_on_hyperbolic_is_skipped_with_note() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n = 3\np = 3\nsource = hyperbolic\ntarget = hyperbolic\nalpha0 = 0.5\nrmax = 20\n[verify]\ncone_bound = on\ncone.c = 0.5\n",
    );
    let (code, _, err) = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let report = json(&dir.path().join("verify.json"));
    let checks = report["cases"][0]["checks"].as_array().unwrap();
    let cone = checks.iter().find(|c| c["name"] == "cone_bound").unwrap();
    assert_eq!(cone["status"], "skipped");
    assert!(cone["note"].as_str().unwrap().contains("wrong family"));
}

#[test]
fn corrupted_profile_fails_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve");
    let cfg_text = "n = 3\np = 3\nsource = hyperbolic\ntarget = euclidean\nalpha0 = 1\nrmax = 10\n";
    let cfg = write_config(dir.path(), cfg_text);
    let (code, _, err) = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");

    let csv = std::fs::read_to_string(out.join("profile.csv")).unwrap();
    let mut lines: Vec<String> = csv.lines().map(str::to_owned).collect();
    let target = lines.len() / 2;
    let mut cols: Vec<String> = lines[target].split(',').map(str::to_owned).collect();
    let r: f64 = cols[0].parse().unwrap();
    cols[2] = "-1.0e-1".into();
    lines[target] = cols.join(",");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();

    let vcfg = dir.path().join("verify.cfg");
    std::fs::write(&vcfg, format!("{cfg_text}verify.profile = {}\n", bad.display())).unwrap();
    let vout = dir.path().join("v");
    let (code, stdout, _) = run(&["verify", "--config", vcfg.to_str().unwrap(), "--out", vout.to_str().unwrap()]);
    assert_eq!(code, 4);
    assert!(stdout.contains("monotonicity"), "{stdout}");
    let report = json(&vout.join("verify.json"));
    let checks = report["cases"][0]["checks"].as_array().unwrap();
    let mono = checks.iter().find(|c| c["name"] == "monotonicity").unwrap();
    assert_eq!(mono["status"], "fail");
    assert_eq!(mono["first_violation"].as_f64().unwrap(), r);

    let missing = dir.path().join("missing.cfg");
    std::fs::write(&missing, format!("{cfg_text}verify.profile = {}\n", dir.path().join("nope.csv").display())).unwrap();
    let (code, _, err) = run(&["verify", "--config", missing.to_str().unwrap(), "--out", vout.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("verify.profile"), "{err}");
}

#[test]
fn stored_profile_reanalyzes_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let (code, _, err) = run(&[
        "solve", "--n", "3", "--p", "3", "--source", "hyperbolic", "--target", "hyperbolic", "--alpha0", "0.5",
        "--rmax", "30", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let spec = Problem::new(3, 3.0, Warp::hyperbolic(), Warp::hyperbolic()).unwrap();
    let profile = read_profile_csv(spec, &out.join("profile.csv"), TerminationEvent::ReachedRMax).unwrap();
    let again = serde_json::to_value(classify_regime(&profile).unwrap()).unwrap();
    assert_eq!(again, json(&out.join("report.json")));
}

#[test]
fn in_process_entry_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let code = pharmonic::cli::run([
        "pharmonic", "solve", "--n", "2", "--p", "2", "--source", "euclidean", "--target", "euclidean", "--alpha0", "1",
        "--rmax", "3", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.join("profile.csv").exists());
    let mut map = ConfigMap::default();
    for (k, v) in [("n", "2"), ("p", "2"), ("source", "euclidean"), ("target", "euclidean"), ("alpha0", "1"), ("rmax", "3")] {
        map.set(k, v);
    }
    let csv = pharmonic::cli::solve_csv(&map).unwrap();
    assert_eq!(csv.as_bytes(), std::fs::read(out.join("profile.csv")).unwrap());
}
