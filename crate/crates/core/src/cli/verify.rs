//! Runs the property checks on profiles and assembles `verify.json`.

use serde::Serialize;

use super::config::{Start, VerifyConfig};
use crate::analysis::{
    check_barrier_invariance, check_cone_bound, check_cone_separation, check_energy_floor,
    check_energy_slope_bounds, check_monotonicity, check_no_recrossing, regime_or_undetermined,
    slope_bound_constants, vanishing_order, CheckOutcome, CheckStatus,
};
use crate::error::{Error, Result};
use crate::integrator::{solve, solve_from, SolutionProfile};
use crate::ode::{ProblemSpec, StatePoint};
use crate::warp::WarpProfile;

/// Default window of the energy-slope check, clipped to the profile.
pub const SLOPE_WINDOW: (f64, f64) = (1.0, 10.0);
/// Vanishing order is only measured on profiles that reach this close to 0.
const SMALL_R: f64 = 1e-2;

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub spec: ProblemSpec<f64>,
    pub termination: String,
    pub regime: String,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub cases: Vec<CaseReport>,
}

impl VerifyReport {
    pub fn new(cases: Vec<CaseReport>) -> Self {
        Self {
            passed: cases.iter().all(|c| c.passed),
            cases,
        }
    }
}

/// Errors meaning "this check does not apply here" become skipped checks.
fn outcome(name: &str, result: Result<CheckOutcome>) -> CheckOutcome {
    match result {
        Ok(o) => o,
        Err(
            e @ (Error::WrongFamily(_)
            | Error::NotApplicable(_)
            | Error::HypothesisViolated(_)
            | Error::UnsupportedFamily(_)
            | Error::WindowTooShort { .. }),
        ) => CheckOutcome::skipped(name, e.to_string()),
        Err(e) => CheckOutcome {
            name: name.to_owned(),
            status: CheckStatus::Fail,
            margin: f64::NAN,
            first_violation: None,
            note: e.to_string(),
        },
    }
}

fn log_grid(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(move |i| lo * (ratio * i as f64).exp())
}

/// Smallest `C` with `e^{ar}/C <= f, f' <= C e^{ar}` at `r = 1`, the nodes
/// beyond 1 and a grid up to where `e^{ar}` stays finite.
pub fn growth_constant(f: &WarpProfile<f64>, a: f64, radii: &[f64]) -> f64 {
    let hi = (300.0 / a).max(1.0);
    let samples = radii
        .iter()
        .copied()
        .filter(|&r| (1.0..=hi).contains(&r))
        .chain(log_grid(1.0, hi, 200));
    samples.fold(1.0f64, |c, r| {
        let e = (a * r).exp();
        let (v, d) = (f.eval(r), f.deriv(r));
        c.max(v / e).max(e / v).max(d / e).max(e / d)
    }) * (1.0 + 1e-12)
}

/// Smallest `C₂` with `g' <= C₂ g` at `y = 1`, the values beyond 1 and a grid.
pub fn log_derivative_constant(g: &WarpProfile<f64>, values: &[f64]) -> f64 {
    let samples = values
        .iter()
        .copied()
        .filter(|&y| y >= 1.0 && y.is_finite())
        .chain(log_grid(1.0, 100.0, 200));
    samples.fold(0.0f64, |c, y| c.max(g.deriv(y) / g.eval(y))) * (1.0 + 1e-12)
}

fn energy_slope(profile: &SolutionProfile<f64>, settings: &VerifyConfig) -> Result<CheckOutcome> {
    let (lo, hi) = settings.slope_window.unwrap_or(SLOPE_WINDOW);
    let window = (lo, hi.min(profile.last().r));
    if !(window.1 > window.0) {
        return Err(Error::NotApplicable(format!("profile ends before r = {lo}")));
    }
    let (a, b) = slope_bound_constants(profile, window);
    check_energy_slope_bounds(
        profile,
        settings.slope_a.unwrap_or(a),
        settings.slope_b.unwrap_or(b),
        window,
    )
}

fn energy_floor(profile: &SolutionProfile<f64>, settings: &VerifyConfig) -> Result<CheckOutcome> {
    let spec = profile.spec();
    let a = spec.f().exp_rate().ok_or_else(|| {
        Error::HypothesisViolated(format!("{} does not grow exponentially", spec.f()))
    })?;
    let c = settings.floor_c.unwrap_or_else(|| growth_constant(spec.f(), a, profile.r()));
    let c2 = settings
        .floor_c2
        .unwrap_or_else(|| log_derivative_constant(spec.g(), profile.alpha()));
    let mut out = check_energy_floor(profile, c2, c)?;
    out.note = format!("{}, C = {c}, C2 = {c2}", out.note);
    Ok(out)
}

fn vanishing(profile: &SolutionProfile<f64>) -> Result<CheckOutcome> {
    if !(profile.r()[0] < SMALL_R) {
        return Err(Error::NotApplicable(format!(
            "profile starts at r = {}, no nodes near the origin",
            profile.r()[0]
        )));
    }
    let k = vanishing_order(profile)?;
    Ok(CheckOutcome {
        name: "vanishing_order".into(),
        status: if k.flagged { CheckStatus::Fail } else { CheckStatus::Pass },
        margin: (k.threshold - k.order) / k.threshold,
        first_violation: k.flagged.then_some(k.window[0]),
        note: format!(
            "order {} on [{:e}, {:e}], threshold {}",
            k.order, k.window[0], k.window[1], k.threshold
        ),
    })
}

/// Runs every enabled check. `cone_slope` is the slope at the origin for
/// startup runs and the default cone constant.
pub fn run_checks(
    profile: &SolutionProfile<f64>,
    cone_slope: Option<f64>,
    settings: &VerifyConfig,
) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let on = |c: &str| settings.is_enabled(c);
    if on("monotonicity") {
        out.push(check_monotonicity(profile));
    }
    if on("energy_slope") {
        out.push(outcome("energy_slope_bounds", energy_slope(profile, settings)));
    }
    if on("cone_bound") {
        let result = match settings.cone_c.or(cone_slope) {
            Some(c) => check_cone_bound(profile, c),
            None => Err(Error::NotApplicable("no cone slope: set verify.cone.c".into())),
        };
        out.push(outcome("cone_bound", result));
    }
    if on("cone_separation") {
        out.push(outcome(
            "cone_separation",
            check_cone_separation(profile, &settings.cone_cs),
        ));
    }
    if on("energy_floor") {
        out.push(outcome("energy_floor", energy_floor(profile, settings)));
    }
    if on("vanishing_order") {
        out.push(outcome("vanishing_order", vanishing(profile)));
    }
    if on("barrier") {
        out.push(outcome("barrier_invariance", check_barrier_invariance(profile)));
    }
    if on("no_recrossing") {
        out.push(outcome("no_recrossing", check_no_recrossing(profile)));
    }
    out
}

pub fn case_report(
    name: impl Into<String>,
    profile: &SolutionProfile<f64>,
    mut checks: Vec<CheckOutcome>,
    cone_slope: Option<f64>,
    settings: &VerifyConfig,
) -> CaseReport {
    checks.extend(run_checks(profile, cone_slope, settings));
    CaseReport {
        name: name.into(),
        spec: *profile.spec(),
        termination: profile.termination().to_string(),
        regime: regime_or_undetermined(profile).to_string(),
        passed: checks.iter().all(CheckOutcome::passed),
        checks,
    }
}

/// Solves a run description; the profile for startup runs includes the
/// nodes of the local solution.
pub fn solve_run(spec: &ProblemSpec<f64>, start: Start, r_max: f64, tol: f64) -> Result<SolutionProfile<f64>> {
    match start {
        Start::Origin(alpha0) => solve(spec, alpha0, r_max, tol),
        Start::Interior(s) => solve_from(spec, s, r_max, tol),
    }
}

/// One member of the built-in suite.
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: String,
    pub spec: ProblemSpec<f64>,
    pub start: Start,
    pub r_max: f64,
    pub cone_c: Option<f64>,
}

fn problem(n: usize, p: f64, f: WarpProfile<f64>, g: WarpProfile<f64>) -> ProblemSpec<f64> {
    ProblemSpec::new(n, p, f, g).expect("built-in problems are valid")
}

/// The families covered by the acceptance criteria, each with its checks.
pub fn builtin_suite() -> Vec<SuiteCase> {
    let e = WarpProfile::euclidean();
    let h = WarpProfile::hyperbolic();
    let power = |m: f64| WarpProfile::power(m).expect("valid exponent");
    let mut cases = Vec::new();
    let mut add = |name: String, spec, start, r_max, cone_c| {
        cases.push(SuiteCase {
            name,
            spec,
            start,
            r_max,
            cone_c,
        })
    };

    for p in [2.5, 3.0, 4.0] {
        add(format!("identity hyperbolic p={p}"), problem(3, p, h, h), Start::Origin(1.0), 20.0, None);
    }
    for p in [3.0, 4.0] {
        for c in [0.5, 1.0, 2.0] {
            add(format!("linear euclidean p={p} c={c}"), problem(3, p, e, e), Start::Origin(c), 20.0, Some(c));
        }
    }
    for a in [0.5, 1.0, 2.0] {
        add(format!("hyperbolic pair alpha0={a}"), problem(3, 3.0, h, h), Start::Origin(a), 30.0, None);
    }
    for p in [2.5, 3.0, 4.0] {
        for a in [0.5, 1.0, 2.0] {
            add(format!("hyperbolic to euclidean p={p} alpha0={a}"), problem(3, p, h, e), Start::Origin(a), 40.0, None);
        }
    }
    for n in [3, 2] {
        add(
            format!("power source n={n} delta=2"),
            problem(n, 4.0, power(2.0), e),
            Start::Interior(StatePoint::new(1.0, 0.5, 0.5)),
            200.0,
            None,
        );
    }
    add("power pair m=1".into(), problem(3, 4.0, power(1.0), power(1.0)), Start::Origin(0.5), 50.0, Some(0.5));
    add(
        "power pair m=2".into(),
        problem(3, 4.0, power(2.0), power(2.0)),
        Start::Interior(StatePoint::new(1.0, 0.4, 0.4)),
        50.0,
        Some(0.5),
    );
    let fast = WarpProfile::exp_growth(2.0).expect("valid rate");
    add("hyperbolic to exp a=2".into(), problem(3, 3.0, h, fast), Start::Origin(1.0), 30.0, None);
    cases
}

pub fn run_suite_case(case: &SuiteCase, tol: f64, settings: &VerifyConfig) -> CaseReport {
    let cone_slope = case.cone_c.or(match case.start {
        Start::Origin(a) => Some(a),
        Start::Interior(_) => None,
    });
    match solve_run(&case.spec, case.start, case.r_max, tol) {
        Ok(profile) => case_report(case.name.clone(), &profile, Vec::new(), cone_slope, settings),
        Err(e) => CaseReport {
            name: case.name.clone(),
            spec: case.spec,
            termination: "SolverFailure".into(),
            regime: "Undetermined".into(),
            passed: false,
            checks: vec![CheckOutcome {
                name: "solve".into(),
                status: CheckStatus::Fail,
                margin: f64::NAN,
                first_violation: None,
                note: e.to_string(),
            }],
        },
    }
}
