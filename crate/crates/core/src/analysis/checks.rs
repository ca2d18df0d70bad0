//! Pass/fail checks of inequalities that every solution must satisfy.

use serde::{Deserialize, Serialize};

use super::fit::least_squares;
use super::{classify_regime, Probe, Regime, Side, SLACK};
use crate::error::{Error, Result};
use crate::integrator::SolutionProfile;
use crate::ode::ProblemSpec;
use crate::warp::WarpKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// Result of one check. `margin` is the worst normalized distance to the
/// bound, negative when violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub status: CheckStatus,
    pub margin: f64,
    pub first_violation: Option<f64>,
    pub note: String,
}

impl CheckOutcome {
    fn judged(name: &str, margin: f64, first_violation: Option<f64>, note: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            status: if first_violation.is_none() {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            margin,
            first_violation,
            note: note.into(),
        }
    }

    pub fn skipped(name: &str, note: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            status: CheckStatus::Skipped,
            margin: f64::NAN,
            first_violation: None,
            note: note.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

fn is_trivial(profile: &SolutionProfile<f64>) -> bool {
    profile.alpha().iter().all(|&a| a == 0.0)
}

/// `α' > 0` at every node of a nontrivial profile.
pub fn check_monotonicity(profile: &SolutionProfile<f64>) -> CheckOutcome {
    const NAME: &str = "monotonicity";
    if is_trivial(profile) {
        return CheckOutcome::skipped(NAME, "trivial solution");
    }
    let margin = profile.alpha_prime().iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let first = profile
        .alpha_prime()
        .iter()
        .position(|&v| !(v > 0.0))
        .map(|i| profile.r()[i]);
    CheckOutcome::judged(NAME, margin, first, "")
}

/// Two-sided bound on the logarithmic derivative of `θ^{q-1}` on `window`,
/// given `|f'| <= a` and `|g'(α)| <= b` there:
/// `-(n-1)(p-2)(a+b)/((p-1) f) <= (θ^{q-1})'/θ^{q-1} <= (n-1)(p-2)(a+b)/(min(p-1, n-1) f)`.
pub fn check_energy_slope_bounds(
    profile: &SolutionProfile<f64>,
    a: f64,
    b: f64,
    window: (f64, f64),
) -> Result<CheckOutcome> {
    const NAME: &str = "energy_slope_bounds";
    let spec = profile.spec();
    let (lo, hi) = window;
    let start = profile.index_at_or_after(lo);
    let end = profile.r().partition_point(|&r| r <= hi);
    if end < start + 3 {
        return Err(Error::WindowTooShort {
            lo,
            hi,
            nodes: end.saturating_sub(start),
            required: 3,
        });
    }
    for i in start..end {
        let (r, alpha) = (profile.r()[i], profile.alpha()[i]);
        let fp = spec.f().deriv(r).abs();
        let gp = spec.g().deriv(alpha).abs();
        if fp > a * (1.0 + SLACK) || gp > b * (1.0 + SLACK) {
            return Err(Error::HypothesisViolated(format!(
                "at r = {r}: |f'| = {fp}, |g'(alpha)| = {gp} exceed a = {a}, b = {b}"
            )));
        }
    }

    let n1 = (spec.n() - 1) as f64;
    let p = spec.p();
    let q1 = spec.q() - 1.0;
    let log_theta: Vec<f64> = profile.theta()[start..end].iter().map(|t| q1 * t.ln()).collect();
    let r = &profile.r()[start..end];
    let mut margin = f64::INFINITY;
    let mut first = None;
    for i in 1..r.len() - 1 {
        let (h0, h1) = (r[i] - r[i - 1], r[i + 1] - r[i]);
        let d = (-h1 / (h0 * (h0 + h1))) * log_theta[i - 1]
            + ((h1 - h0) / (h0 * h1)) * log_theta[i]
            + (h0 / (h1 * (h0 + h1))) * log_theta[i + 1];
        let f = spec.f().eval(r[i]);
        let core = n1 * (p - 2.0) * (a + b) / f;
        let lower = -core / (p - 1.0);
        let upper = core / (p - 1.0).min(n1);
        let slack = 1e-3 * core.abs().max(f64::MIN_POSITIVE);
        let scale = core.abs().max(f64::MIN_POSITIVE);
        let m = ((upper - d) / scale).min((d - lower) / scale);
        margin = margin.min(m);
        if first.is_none() && (d > upper + slack || d < lower - slack) {
            first = Some(r[i]);
        }
    }
    Ok(CheckOutcome::judged(NAME, margin, first, format!("a = {a}, b = {b}")))
}

/// `(a, b)` as the largest `|f'|` and `|g'(α)|` over the window nodes.
pub fn slope_bound_constants(profile: &SolutionProfile<f64>, window: (f64, f64)) -> (f64, f64) {
    let spec = profile.spec();
    let start = profile.index_at_or_after(window.0);
    let end = profile.r().partition_point(|&r| r <= window.1);
    (start..end).fold((0.0f64, 0.0f64), |(a, b), i| {
        (
            a.max(spec.f().deriv(profile.r()[i]).abs()),
            b.max(spec.g().deriv(profile.alpha()[i]).abs()),
        )
    })
}

fn equal_power_warps(spec: &ProblemSpec<f64>) -> Result<f64> {
    match (spec.f().power_exponent(), spec.g().power_exponent()) {
        (Some(m), Some(k)) if m == k => Ok(m),
        _ => Err(Error::WrongFamily(format!(
            "cone checks need f = g = r^m, got {} -> {}",
            spec.f(),
            spec.g()
        ))),
    }
}

/// `α(r) <= c r (1 + 1e-9)` at every node, for `f = g = r^m`.
pub fn check_cone_bound(profile: &SolutionProfile<f64>, c: f64) -> Result<CheckOutcome> {
    equal_power_warps(profile.spec())?;
    let mut margin = f64::INFINITY;
    let mut first = None;
    for i in 0..profile.len() {
        let (r, alpha) = (profile.r()[i], profile.alpha()[i]);
        let cone = c * r;
        margin = margin.min((cone - alpha) / cone);
        if first.is_none() && alpha > cone * (1.0 + SLACK) {
            first = Some(r);
        }
    }
    Ok(CheckOutcome::judged("cone_bound", margin, first, format!("c = {c}")))
}

/// For each `c`, the sign of `α - c r` changes at most once along the
/// profile, so it is eventually constant; `f = g = r^m`.
pub fn check_cone_separation(profile: &SolutionProfile<f64>, cs: &[f64]) -> Result<CheckOutcome> {
    equal_power_warps(profile.spec())?;
    let mut first = None;
    let mut worst_changes = 0usize;
    for &c in cs {
        let mut sign = 0i8;
        let mut changes = 0usize;
        for i in 0..profile.len() {
            let (r, alpha) = (profile.r()[i], profile.alpha()[i]);
            let d = alpha - c * r;
            if d.abs() <= SLACK * c * r {
                continue;
            }
            let s = if d > 0.0 { 1 } else { -1 };
            if sign != 0 && s != sign {
                changes += 1;
                if changes > 1 && first.is_none() {
                    first = Some(r);
                }
            }
            sign = s;
        }
        worst_changes = worst_changes.max(changes);
    }
    Ok(CheckOutcome::judged(
        "cone_separation",
        1.0 - worst_changes as f64,
        first,
        format!("most sign changes of alpha - c r: {worst_changes}"),
    ))
}

/// `δ = (1 / (8 (n-1) C₂ C²))²`.
pub fn energy_floor(n: usize, c2: f64, c: f64) -> f64 {
    (1.0 / (8.0 * (n - 1) as f64 * c2 * c * c)).powi(2)
}

/// `θ >= δ` from the first node with `α >= 1` on, for exponentially growing
/// `f` with constant `C` and a target with `g' <= C₂ g` on `[1, ∞)`.
pub fn check_energy_floor(profile: &SolutionProfile<f64>, c2: f64, c: f64) -> Result<CheckOutcome> {
    const NAME: &str = "energy_floor";
    let spec = profile.spec();
    let rate = spec.f().exp_rate().ok_or_else(|| {
        Error::HypothesisViolated(format!("{} does not grow exponentially", spec.f()))
    })?;
    let radii: Vec<f64> = profile.r().iter().copied().filter(|&r| r >= 1.0).collect();
    if !spec.f().satisfies_exp_growth(rate, c, &radii) {
        return Err(Error::HypothesisViolated(format!(
            "{} violates e^(ar)/C <= f <= C e^(ar) with C = {c}",
            spec.f()
        )));
    }
    let values: Vec<f64> = profile.alpha().iter().copied().filter(|&a| a >= 1.0).collect();
    if !spec.g().satisfies_log_derivative_bound(c2, &values) {
        return Err(Error::HypothesisViolated(format!(
            "{} violates g' <= C2 g with C2 = {c2}",
            spec.g()
        )));
    }
    let regime = classify_regime(profile)?.regime;
    if regime.is_bounded() != Some(false) {
        return Err(Error::NotApplicable(format!("profile is classified {regime}")));
    }
    let start = profile
        .alpha()
        .iter()
        .position(|&a| a >= 1.0)
        .ok_or_else(|| Error::NotApplicable("alpha never reaches 1".into()))?;
    let floor = energy_floor(spec.n(), c2, c);
    let mut margin = f64::INFINITY;
    let mut first = None;
    for i in start..profile.len() {
        let theta = profile.theta()[i];
        margin = margin.min((theta - floor) / floor);
        if first.is_none() && theta < floor * (1.0 - SLACK) {
            first = Some(profile.r()[i]);
        }
    }
    Ok(CheckOutcome::judged(
        NAME,
        margin,
        first,
        format!("floor {floor:e} from r = {}", profile.r()[start]),
    ))
}

/// Order `k` of `α ~ r^k` at the origin from a log-log fit over the
/// smallest decade of radii. Nontrivial solutions have `k <= 2n - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanishingOrder {
    pub order: f64,
    pub threshold: f64,
    pub flagged: bool,
    pub window: [f64; 2],
    pub nodes: usize,
}

pub const MIN_SMALL_R_NODES: usize = 5;

pub fn vanishing_order(profile: &SolutionProfile<f64>) -> Result<VanishingOrder> {
    let r0 = profile.r()[0];
    let end = profile.r().partition_point(|&r| r <= 10.0 * r0);
    if end < MIN_SMALL_R_NODES {
        return Err(Error::WindowTooShort {
            lo: r0,
            hi: 10.0 * r0,
            nodes: end,
            required: MIN_SMALL_R_NODES,
        });
    }
    let x: Vec<f64> = profile.r()[..end].iter().map(|r| r.ln()).collect();
    let y: Vec<f64> = profile.alpha()[..end].iter().map(|a| a.ln()).collect();
    let fit = least_squares(&x, &y)
        .filter(|f| f.slope.is_finite())
        .ok_or_else(|| Error::HypothesisViolated("alpha must be positive near the origin".into()))?;
    let threshold = (2 * profile.spec().n() - 1) as f64;
    Ok(VanishingOrder {
        order: fit.slope,
        threshold,
        flagged: fit.slope > threshold,
        window: [r0, profile.r()[end - 1]],
        nodes: end,
    })
}

fn require_hyperbolic(spec: &ProblemSpec<f64>) -> Result<()> {
    if matches!(spec.f().kind(), WarpKind::Hyperbolic) && matches!(spec.g().kind(), WarpKind::Hyperbolic) {
        Ok(())
    } else {
        Err(Error::WrongFamily(format!(
            "barrier checks need f = g = sinh, got {} -> {}",
            spec.f(),
            spec.g()
        )))
    }
}

/// Once a node beyond `ln(3)/2` has `α = r + δ`, `α' > 1` (`δ > 0`), every
/// later node keeps `α > r + δ` and `α' > 1`; symmetrically below the
/// identity with `α < r - δ` and `α' < 1`.
pub fn check_barrier_invariance(profile: &SolutionProfile<f64>) -> Result<CheckOutcome> {
    const NAME: &str = "barrier_invariance";
    require_hyperbolic(profile.spec())?;
    let Some(probe) = Probe::first(profile) else {
        return Ok(CheckOutcome::judged(NAME, f64::INFINITY, None, "no decisive node"));
    };
    let delta = (probe.alpha - probe.r).abs();
    let mut margin = f64::INFINITY;
    let mut first = None;
    for i in probe.index + 1..profile.len() {
        let (r, alpha, ap) = (profile.r()[i], profile.alpha()[i], profile.alpha_prime()[i]);
        let slack = SLACK * r.max(1.0);
        let (gap_margin, slope_margin) = match probe.side {
            Side::Above => ((alpha - r) - delta, ap - 1.0),
            Side::Below => ((r - alpha) - delta, 1.0 - ap),
        };
        margin = margin.min(gap_margin).min(slope_margin);
        if first.is_none() && (gap_margin < -slack || slope_margin < -SLACK) {
            first = Some(r);
        }
    }
    Ok(CheckOutcome::judged(
        NAME,
        margin,
        first,
        format!("decisive node r = {} ({:?}), delta = {delta:e}", probe.r, probe.side),
    ))
}

/// Beyond the first decisive node the sign of `α - r` never changes.
pub fn check_no_recrossing(profile: &SolutionProfile<f64>) -> Result<CheckOutcome> {
    const NAME: &str = "no_recrossing";
    require_hyperbolic(profile.spec())?;
    let Some(probe) = Probe::first(profile) else {
        return Ok(CheckOutcome::judged(NAME, f64::INFINITY, None, "no decisive node"));
    };
    let sign = if probe.side == Side::Above { 1.0 } else { -1.0 };
    let mut margin = f64::INFINITY;
    let mut first = None;
    for i in probe.index..profile.len() {
        let (r, alpha) = (profile.r()[i], profile.alpha()[i]);
        let d = sign * (alpha - r);
        margin = margin.min(d);
        if first.is_none() && d < -SLACK * r.max(1.0) {
            first = Some(r);
        }
    }
    Ok(CheckOutcome::judged(NAME, margin, first, format!("side {:?}", probe.side)))
}

/// Whether the profile's regime makes the energy floor applicable.
pub fn is_unbounded(profile: &SolutionProfile<f64>) -> bool {
    classify_regime(profile).map(|r| r.regime.is_bounded() == Some(false)).unwrap_or(false)
}

/// The regime of a profile, or `Undetermined` when it cannot be classified.
pub fn regime_or_undetermined(profile: &SolutionProfile<f64>) -> Regime {
    classify_regime(profile).map(|r| r.regime).unwrap_or(Regime::Undetermined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{solve, solve_from, TerminationEvent};
    use crate::ode::StatePoint;
    use crate::warp::WarpProfile;

    fn spec(n: usize, p: f64, f: WarpProfile<f64>, g: WarpProfile<f64>) -> ProblemSpec<f64> {
        ProblemSpec::new(n, p, f, g).unwrap()
    }

    fn flat() -> ProblemSpec<f64> {
        spec(2, 4.0, WarpProfile::euclidean(), WarpProfile::euclidean())
    }

    fn synthetic(spec: ProblemSpec<f64>, r: Vec<f64>, alpha: Vec<f64>, ap: Vec<f64>) -> SolutionProfile<f64> {
        SolutionProfile::from_nodes(spec, r, alpha, ap, TerminationEvent::ReachedRMax).unwrap()
    }

    #[test]
    fn monotonicity_flags_the_bad_node() {
        let r: Vec<f64> = (1..=10).map(f64::from).collect();
        let mut ap = vec![1.0; 10];
        ap[4] = -0.1;
        let prof = synthetic(flat(), r.clone(), r.clone(), ap);
        let out = check_monotonicity(&prof);
        assert_eq!(out.status, CheckStatus::Fail);
        assert_eq!(out.first_violation, Some(5.0));
    }

    #[test]
    fn monotonicity_skips_trivial_solutions() {
        let r: Vec<f64> = (1..=5).map(f64::from).collect();
        let e = WarpProfile::euclidean();
        let prof = SolutionProfile::from_nodes(spec(3, 4.0, e, e).with_theta_min(0.0), r, vec![0.0; 5], vec![0.0; 5], TerminationEvent::ReachedRMax);
        // θ = 0 everywhere, so the profile can still be assembled.
        let prof = prof.unwrap();
        assert_eq!(check_monotonicity(&prof).status, CheckStatus::Skipped);
    }

    #[test]
    fn monotonicity_holds_on_solutions() {
        let h = WarpProfile::hyperbolic();
        let prof = solve(&spec(3, 3.0, h, h), 0.5, 10.0, 1e-10).unwrap();
        assert_eq!(check_monotonicity(&prof).status, CheckStatus::Pass);
    }

    #[test]
    fn energy_slope_bounds_hold_for_hyperbolic_to_flat() {
        let s = spec(3, 3.0, WarpProfile::hyperbolic(), WarpProfile::euclidean());
        let prof = solve(&s, 1.0, 12.0, 1e-10).unwrap();
        let out = check_energy_slope_bounds(&prof, 10f64.cosh(), 1.0, (1.0, 10.0)).unwrap();
        assert_eq!(out.status, CheckStatus::Pass, "{out:?}");
        let (a, b) = slope_bound_constants(&prof, (1.0, 10.0));
        let tight = check_energy_slope_bounds(&prof, a, b, (1.0, 10.0)).unwrap();
        assert_eq!(tight.status, CheckStatus::Pass, "{tight:?}");
    }

    #[test]
    fn energy_slope_bounds_trivial_for_flat_identity() {
        let prof = solve(&flat(), 1.0, 10.0, 1e-10).unwrap();
        let out = check_energy_slope_bounds(&prof, 1.0, 1.0, (1.0, 10.0)).unwrap();
        assert_eq!(out.status, CheckStatus::Pass);
    }

    #[test]
    fn energy_slope_bounds_reject_bad_constants() {
        let h = WarpProfile::hyperbolic();
        let prof = solve(&spec(3, 3.0, h, h), 0.5, 10.0, 1e-10).unwrap();
        assert!(matches!(
            check_energy_slope_bounds(&prof, 100.0, 0.5, (1.0, 5.0)),
            Err(Error::HypothesisViolated(_))
        ));
    }

    #[test]
    fn cone_bound_cases() {
        let prof = solve(&spec(3, 4.0, WarpProfile::euclidean(), WarpProfile::euclidean()), 0.5, 20.0, 1e-10).unwrap();
        assert_eq!(check_cone_bound(&prof, 0.5).unwrap().status, CheckStatus::Pass);

        let sq = WarpProfile::power(2.0).unwrap();
        let s = spec(3, 4.0, sq, sq);
        let prof = solve_from(&s, StatePoint::new(1.0, 0.4, 0.4), 50.0, 1e-10).unwrap();
        assert_eq!(check_cone_bound(&prof, 0.5).unwrap().status, CheckStatus::Pass);
        assert_eq!(check_cone_separation(&prof, &[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap().status, CheckStatus::Pass);

        let r: Vec<f64> = (1..=10).map(f64::from).collect();
        let alpha: Vec<f64> = r.iter().map(|&x| 0.4 * x + 0.05 * x * x).collect();
        let ap: Vec<f64> = r.iter().map(|&x| 0.4 + 0.1 * x).collect();
        let crossing = synthetic(s, r, alpha, ap);
        let out = check_cone_bound(&crossing, 0.5).unwrap();
        assert_eq!(out.status, CheckStatus::Fail);
        assert_eq!(out.first_violation, Some(3.0));

        let h = WarpProfile::hyperbolic();
        let hp = solve(&spec(3, 3.0, h, h), 0.5, 5.0, 1e-10).unwrap();
        assert!(matches!(check_cone_bound(&hp, 0.5), Err(Error::WrongFamily(_))));
    }

    #[test]
    fn energy_floor_value() {
        assert!((energy_floor(3, 1.0, 2.0) - 1.0 / 4096.0).abs() < 1e-18);
    }

    #[test]
    fn energy_floor_not_applicable_when_bounded() {
        let h = WarpProfile::hyperbolic();
        let prof = solve(&spec(3, 3.0, h, h), 0.5, 30.0, 1e-10).unwrap();
        let c2 = 1f64 / 1f64.tanh();
        assert!(matches!(check_energy_floor(&prof, c2, 2.5), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn vanishing_order_cases() {
        let e = WarpProfile::hyperbolic();
        let prof = solve(&spec(3, 4.0, e, e), 0.8, 2.0, 1e-10).unwrap();
        let k = vanishing_order(&prof).unwrap();
        assert!((k.order - 1.0).abs() < 0.01 && !k.flagged);

        let r: Vec<f64> = (0..20).map(|i| 1e-3 * 1.1f64.powi(i)).collect();
        let s = spec(2, 4.0, WarpProfile::euclidean(), WarpProfile::euclidean());
        let fifth = synthetic(s, r.clone(), r.iter().map(|x| x.powi(5)).collect(), r.iter().map(|x| 5.0 * x.powi(4)).collect());
        let k = vanishing_order(&fifth).unwrap();
        assert!((k.order - 5.0).abs() < 1e-9 && k.flagged);
        let square = synthetic(s, r.clone(), r.iter().map(|x| x * x).collect(), r.iter().map(|x| 2.0 * x).collect());
        let k = vanishing_order(&square).unwrap();
        assert!((k.order - 2.0).abs() < 1e-9 && !k.flagged);
    }

    #[test]
    fn barriers_hold_on_hyperbolic_runs() {
        let h = WarpProfile::hyperbolic();
        for a in [0.5, 1.0, 2.0] {
            let prof = solve(&spec(3, 3.0, h, h), a, 30.0, 1e-10).unwrap();
            assert_eq!(check_barrier_invariance(&prof).unwrap().status, CheckStatus::Pass, "{a}");
            assert_eq!(check_no_recrossing(&prof).unwrap().status, CheckStatus::Pass, "{a}");
        }
    }

    #[test]
    fn barrier_detects_recrossing() {
        let h = WarpProfile::hyperbolic();
        let r: Vec<f64> = (1..=10).map(f64::from).collect();
        let alpha: Vec<f64> = r.iter().map(|&x| if x < 5.0 { x + 0.5 } else { x - 0.5 }).collect();
        let ap = vec![1.1; 10];
        let prof = synthetic(spec(3, 3.0, h, h), r, alpha, ap);
        assert_eq!(check_barrier_invariance(&prof).unwrap().first_violation, Some(5.0));
        assert_eq!(check_no_recrossing(&prof).unwrap().first_violation, Some(5.0));
    }
}
