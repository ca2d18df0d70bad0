//! Command-line front end: `solve`, `sweep` and `verify`.

pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{classify_regime, fit_asymptotic_exponent, CheckOutcome, CheckStatus, Regime, RegimeReport};
use crate::error::{Error, Result};
use crate::integrator::SolutionProfile;
use crate::io::{
    parse_profile_table, profile_csv, theta_mismatch, write_json, write_profile_csv, SolutionDocument,
};
use config::{ConfigMap, RunConfig, Start};
use verify::{builtin_suite, case_report, run_suite_case, solve_run, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "pharmonic", version, about = "Rotationally symmetric p-harmonic maps between model manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one run and write profile.csv, solution.json and report.json.
    Solve(Common),
    /// Solve a parameter grid and write phase.csv.
    Sweep(Common),
    /// Run the property checks and write verify.json.
    Verify(Common),
}

/// Flags shared by every subcommand; each overrides the config key of the
/// same name.
#[derive(Debug, Args)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rmax: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    alpha0: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    p: Option<String>,
    /// Source warp, e.g. `hyperbolic` or `power:m=2`.
    #[arg(long)]
    source: Option<String>,
    /// Target warp, same syntax as `--source`.
    #[arg(long)]
    target: Option<String>,
    /// Worker threads for sweeps.
    #[arg(long)]
    jobs: Option<String>,
}

impl Common {
    fn config_map(&self) -> Result<ConfigMap> {
        let mut map = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::config("--config", format!("cannot read {}: {e}", path.display()))
                })?;
                ConfigMap::parse(&text)?
            }
            None => ConfigMap::default(),
        };
        let flags = [
            ("rmax", &self.rmax),
            ("tol", &self.tol),
            ("alpha0", &self.alpha0),
            ("n", &self.n),
            ("p", &self.p),
            ("source", &self.source),
            ("target", &self.target),
            ("jobs", &self.jobs),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                map.set(key, v);
            }
        }
        if let Some(out) = &self.out {
            map.set("out", &out.to_string_lossy());
        }
        Ok(map)
    }
}

/// Exit status for an error: config problems are 2, anything else 3.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidWarpParameter { .. } | Error::InvalidProblem(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Solve(c) => c.config_map().and_then(|m| run_solve(&m)),
        Command::Sweep(c) => c.config_map().and_then(|m| run_sweep(&m)),
        Command::Verify(c) => c.config_map().and_then(|m| run_verify(&m)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::config("out", format!("cannot create {}: {e}", dir.display())))
}

fn report_or_undetermined(profile: &SolutionProfile<f64>) -> RegimeReport {
    classify_regime(profile)
        .unwrap_or_else(|e| RegimeReport::undetermined(Vec::new(), Vec::new(), e.to_string()))
}

pub fn run_solve(map: &ConfigMap) -> Result<i32> {
    let config = RunConfig::from_map(map)?;
    let (start, r_max) = config.run()?;
    let spec = config.spec()?;
    let profile = solve_run(&spec, start, r_max, config.tol)?;
    create_out(&config.out)?;
    write_profile_csv(&profile, &config.out.join("profile.csv"))?;
    write_json(&SolutionDocument::new(&profile), &config.out.join("solution.json"))?;
    let report = report_or_undetermined(&profile);
    write_json(&report, &config.out.join("report.json"))?;
    let last = profile.last();
    println!(
        "{}: alpha({}) = {}, regime {}",
        profile.termination(),
        last.r,
        last.alpha,
        report.regime
    );
    if profile.termination().radius().is_some() {
        eprintln!("note: run stopped early with {}", profile.termination());
    }
    Ok(EXIT_OK)
}

/// Window of the exponent column: the last three quarters of the run.
fn exponent_column(profile: &SolutionProfile<f64>) -> String {
    let r_end = profile.last().r;
    fit_asymptotic_exponent(profile, (r_end / 4.0, r_end))
        .map(|f| format!("{:e}", f.exponent))
        .unwrap_or_default()
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_owned()
    }
}

/// Grid points of the sweep in lexicographic order over the axes.
pub fn sweep_points(config: &RunConfig) -> Result<Vec<RunConfig>> {
    let mut points = vec![config.clone()];
    for axis in &config.sweep {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for point in &points {
            for &v in &axis.values {
                next.push(point.with_axis(&axis.key, v)?);
            }
        }
        points = next;
    }
    Ok(points)
}

/// Warp parameter columns, `source.m` style, present in any grid point.
fn warp_columns(points: &[RunConfig]) -> Vec<String> {
    let mut cols = std::collections::BTreeSet::new();
    for p in points {
        for (side, choice) in [("source", &p.source), ("target", &p.target)] {
            for k in choice.params.keys() {
                cols.insert(format!("{side}.{k}"));
            }
        }
    }
    let (mut source, target): (Vec<String>, Vec<String>) =
        cols.into_iter().partition(|c| c.starts_with("source."));
    source.extend(target);
    source
}

fn sweep_row(point: &RunConfig, columns: &[String]) -> String {
    let mut row = format!("{},{}", point.n, point.p);
    match point.start {
        Some(Start::Origin(a)) => {
            let _ = write!(row, ",{a}");
        }
        _ => row.push(','),
    }
    for col in columns {
        let (side, k) = col.split_once('.').expect("column is side.param");
        let choice = if side == "source" { &point.source } else { &point.target };
        match choice.params.get(k) {
            Some(v) => {
                let _ = write!(row, ",{v}");
            }
            None => row.push(','),
        }
    }
    let outcome = point.spec().and_then(|spec| {
        let (start, r_max) = point.run()?;
        solve_run(&spec, start, r_max, point.tol)
    });
    match outcome {
        Ok(profile) => {
            let report = report_or_undetermined(&profile);
            let note = report.notes.first().cloned().unwrap_or_default();
            let _ = write!(
                row,
                ",{},{},{},{}",
                report.regime.name(),
                exponent_column(&profile),
                profile.termination(),
                csv_field(&note)
            );
        }
        Err(e) => {
            let _ = write!(row, ",{},,Failed,{}", Regime::Undetermined.name(), csv_field(&e.to_string()));
        }
    }
    row
}

/// The phase table for a sweep config, rows in grid order.
pub fn phase_table(config: &RunConfig) -> Result<String> {
    if config.sweep.is_empty() {
        return Err(Error::config("sweep", "a sweep needs at least one sweep.* axis"));
    }
    let points = sweep_points(config)?;
    let columns = warp_columns(&points);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    let rows: Vec<String> = pool.install(|| points.par_iter().map(|p| sweep_row(p, &columns)).collect());
    let mut table = String::from("n,p,alpha0");
    for c in &columns {
        table.push(',');
        table.push_str(c);
    }
    table.push_str(",regime,exponent,termination,note\n");
    for row in rows {
        table.push_str(&row);
        table.push('\n');
    }
    Ok(table)
}

pub fn run_sweep(map: &ConfigMap) -> Result<i32> {
    let config = RunConfig::from_map(map)?;
    let table = phase_table(&config)?;
    create_out(&config.out)?;
    std::fs::write(config.out.join("phase.csv"), &table)?;
    println!("{} grid points written to {}", table.lines().count() - 1, config.out.join("phase.csv").display());
    Ok(EXIT_OK)
}

/// Verifies a stored profile: parses it leniently so corrupted rows show up
/// as failed checks with their location rather than as a parse error.
fn verify_stored(config: &RunConfig, path: &Path) -> Result<verify::CaseReport> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("verify.profile", format!("cannot read {}: {e}", path.display())))?;
    let table = parse_profile_table(&text)?;
    let spec = config.spec()?;
    let profile = SolutionProfile::from_nodes(
        spec,
        table.r.clone(),
        table.alpha.clone(),
        table.alpha_prime.clone(),
        config.verify.termination,
    )?;
    let mismatch = theta_mismatch(&table, &profile);
    let consistency = CheckOutcome {
        name: "theta_consistency".into(),
        status: if mismatch.is_some() { CheckStatus::Fail } else { CheckStatus::Pass },
        margin: if mismatch.is_some() { -1.0 } else { 0.0 },
        first_violation: mismatch.map(|(_, r)| r),
        note: "stored theta against theta recomputed from the nodes".into(),
    };
    let cone_slope = match config.start {
        Some(Start::Origin(a)) => Some(a),
        _ => None,
    };
    Ok(case_report(
        path.display().to_string(),
        &profile,
        vec![consistency],
        cone_slope,
        &config.verify,
    ))
}

pub fn verify_report(map: &ConfigMap) -> Result<(VerifyReport, PathBuf)> {
    let only_out = map.keys().all(|k| k == "out" || k == "tol" || k == "jobs");
    if only_out {
        let out = PathBuf::from(map.get("out").unwrap_or(config::DEFAULT_OUT));
        let tol = match map.get("tol") {
            Some(t) => t
                .parse::<f64>()
                .ok()
                .filter(|t| *t > config::MIN_TOL && *t < config::MAX_TOL)
                .ok_or_else(|| Error::config("tol", format!("invalid tolerance `{t}`")))?,
            None => crate::integrator::DEFAULT_TOL,
        };
        let settings = config::VerifyConfig::default();
        let cases: Vec<_> = builtin_suite()
            .par_iter()
            .map(|c| run_suite_case(c, tol, &settings))
            .collect();
        return Ok((VerifyReport::new(cases), out));
    }
    let config = RunConfig::from_map(map)?;
    let case = match &config.verify.profile {
        Some(path) => verify_stored(&config, path)?,
        None => {
            let (start, r_max) = config.run()?;
            let spec = config.spec()?;
            let profile = solve_run(&spec, start, r_max, config.tol)?;
            let cone_slope = match start {
                Start::Origin(a) => Some(a),
                Start::Interior(_) => None,
            };
            case_report("config run", &profile, Vec::new(), cone_slope, &config.verify)
        }
    };
    Ok((VerifyReport::new(vec![case]), config.out))
}

pub fn run_verify(map: &ConfigMap) -> Result<i32> {
    let (report, out) = verify_report(map)?;
    create_out(&out)?;
    write_json(&report, &out.join("verify.json"))?;
    let (mut passed, mut skipped, mut failed) = (0, 0, 0);
    for case in &report.cases {
        for check in &case.checks {
            match check.status {
                CheckStatus::Pass => passed += 1,
                CheckStatus::Skipped => skipped += 1,
                CheckStatus::Fail => {
                    failed += 1;
                    let at = check
                        .first_violation
                        .map(|r| format!(" (first violation at r = {r})"))
                        .unwrap_or_default();
                    println!("FAIL {} / {}{at}: {}", case.name, check.name, check.note);
                }
            }
        }
    }
    println!(
        "{} cases: {passed} checks passed, {failed} failed, {skipped} skipped",
        report.cases.len()
    );
    Ok(if report.passed { EXIT_OK } else { EXIT_VERIFY })
}

/// The CSV text `solve` would write for a config; used to check that runs
/// are reproducible.
pub fn solve_csv(map: &ConfigMap) -> Result<String> {
    let config = RunConfig::from_map(map)?;
    let (start, r_max) = config.run()?;
    Ok(profile_csv(&solve_run(&config.spec()?, start, r_max, config.tol)?))
}
