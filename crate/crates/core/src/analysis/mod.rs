//! Asymptotic classification of computed profiles and numerical checks of
//! the qualitative theory.
//!
//! All analyses work on `f64` profiles.

pub mod checks;
pub mod fit;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::SolutionProfile;
use crate::ode::ProblemSpec;
use crate::warp::WarpKind;

pub use checks::{
    check_barrier_invariance, check_cone_bound, check_cone_separation, check_energy_floor,
    check_energy_slope_bounds, check_monotonicity, check_no_recrossing, energy_floor,
    is_unbounded, regime_or_undetermined, slope_bound_constants,
    vanishing_order, CheckOutcome, CheckStatus, VanishingOrder,
};
pub use fit::{fit_asymptotic_exponent, least_squares, theil_sen, ExponentFit, LineFit};

/// `ln(3)/2`: probes beyond this radius decide the hyperbolic trichotomy.
pub const DECISIVE_RADIUS: f64 = 0.549_306_144_334_054_8;
/// `α'` at the end of a run below which the solution counts as flat.
pub const FLAT_SLOPE: f64 = 1e-4;
/// Growth of `α` over the tail window below which it counts as a plateau.
pub const PLATEAU_INCREASE: f64 = 1e-3;
/// Distance of `α'` from 1 allowed for asymptotic identity.
pub const IDENTITY_SLOPE_TOL: f64 = 1e-2;
/// Thresholds `α - r` must pass, in order, for super-identity growth.
pub const SUPER_IDENTITY_LADDER: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
/// Relative slack applied to every inequality.
pub const SLACK: f64 = 1e-9;
pub const MIN_TAIL_NODES: usize = 50;
/// Largest RMS residual of a log-log fit that still counts as a power law.
pub const POWER_FIT_RMS: f64 = 0.05;
/// Largest relative spread of `α'` over the tail for linear growth.
pub const LINEAR_SLOPE_SPREAD: f64 = 1e-2;

/// Asymptotic behaviour of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum Regime {
    Trivial,
    Bounded,
    /// `α ≈ c r`
    LinearGrowth(f64),
    AsymptoticIdentity,
    SuperIdentity,
    /// `ln α` grows at least with rate `c`
    ExponentialGrowth(f64),
    /// `α' ≈ A r^e` with `e >= -1`, so `α` is unbounded
    PowerSlopeDecay(f64),
    Undetermined,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Trivial => "Trivial",
            Self::Bounded => "Bounded",
            Self::LinearGrowth(_) => "LinearGrowth",
            Self::AsymptoticIdentity => "AsymptoticIdentity",
            Self::SuperIdentity => "SuperIdentity",
            Self::ExponentialGrowth(_) => "ExponentialGrowth",
            Self::PowerSlopeDecay(_) => "PowerSlopeDecay",
            Self::Undetermined => "Undetermined",
        }
    }

    /// Carried parameter and its name.
    pub fn parameter(&self) -> Option<(&'static str, f64)> {
        match *self {
            Self::LinearGrowth(c) => Some(("c_o", c)),
            Self::ExponentialGrowth(c) => Some(("c", c)),
            Self::PowerSlopeDecay(e) => Some(("exponent", e)),
            _ => None,
        }
    }

    /// `Some(true)` for bounded regimes, `Some(false)` for unbounded ones.
    pub fn is_bounded(&self) -> Option<bool> {
        match self {
            Self::Trivial | Self::Bounded => Some(true),
            Self::Undetermined => None,
            _ => Some(false),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.parameter() {
            Some((_, v)) => write!(f, "{}({v:.6})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// One measured quantity behind a classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub check: String,
    pub window: [f64; 2],
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Evidence {
    fn new(check: &str, window: [f64; 2], measured: f64, threshold: f64, passed: bool) -> Self {
        Self {
            check: check.to_owned(),
            window,
            measured,
            threshold,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

/// Classified regime with the evidence behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    #[serde(with = "regime_name")]
    pub regime: Regime,
    pub params: BTreeMap<String, f64>,
    pub evidence: Vec<Evidence>,
    pub windows: Vec<Window>,
    pub notes: Vec<String>,
}

mod regime_name {
    use super::Regime;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &Regime, s: S) -> Result<S::Ok, S::Error> {
        r.name().serialize(s)
    }

    /// The parameter lives in `params`; it is restored by the caller.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Regime, D::Error> {
        let name = String::deserialize(d)?;
        Ok(match name.as_str() {
            "Trivial" => Regime::Trivial,
            "Bounded" => Regime::Bounded,
            "LinearGrowth" => Regime::LinearGrowth(f64::NAN),
            "AsymptoticIdentity" => Regime::AsymptoticIdentity,
            "SuperIdentity" => Regime::SuperIdentity,
            "ExponentialGrowth" => Regime::ExponentialGrowth(f64::NAN),
            "PowerSlopeDecay" => Regime::PowerSlopeDecay(f64::NAN),
            _ => Regime::Undetermined,
        })
    }
}

impl RegimeReport {
    fn new(regime: Regime, evidence: Vec<Evidence>, windows: Vec<Window>, notes: Vec<String>) -> Self {
        let mut params = BTreeMap::new();
        if let Some((k, v)) = regime.parameter() {
            params.insert(k.to_owned(), v);
        }
        Self {
            regime,
            params,
            evidence,
            windows,
            notes,
        }
    }

    pub fn undetermined(evidence: Vec<Evidence>, windows: Vec<Window>, note: impl Into<String>) -> Self {
        Self::new(Regime::Undetermined, evidence, windows, vec![note.into()])
    }
}

/// Side of the identity a hyperbolic profile is on at a decisive node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Above,
    Below,
}

/// First node beyond `ln(3)/2` that is strictly on one side of the identity
/// with slope on the same side of 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub index: usize,
    pub r: f64,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub side: Side,
}

impl Probe {
    /// Classifies a single observed state.
    pub fn observe(r: f64, alpha: f64, alpha_prime: f64) -> Option<Self> {
        if !(r > DECISIVE_RADIUS) {
            return None;
        }
        let gap = alpha - r;
        let tol = SLACK * r.max(1.0);
        let side = if gap > tol && alpha_prime > 1.0 + SLACK {
            Side::Above
        } else if gap < -tol && alpha_prime < 1.0 - SLACK {
            Side::Below
        } else {
            return None;
        };
        Some(Self {
            index: 0,
            r,
            alpha,
            alpha_prime,
            side,
        })
    }

    pub fn first(profile: &SolutionProfile<f64>) -> Option<Self> {
        (profile.index_at_or_after(DECISIVE_RADIUS)..profile.len()).find_map(|i| {
            let s = profile.node(i);
            Probe::observe(s.r, s.alpha, s.alpha_prime).map(|p| Probe { index: i, ..p })
        })
    }
}

fn is_hyperbolic_pair(spec: &ProblemSpec<f64>) -> bool {
    matches!(spec.f().kind(), WarpKind::Hyperbolic) && matches!(spec.g().kind(), WarpKind::Hyperbolic)
}

/// Polynomial source `f = r^δ` with `δ > 1` and a target with bounded `g'`.
fn power_source(spec: &ProblemSpec<f64>) -> Option<f64> {
    match spec.f().kind() {
        WarpKind::Power { m } if m > 1.0 && spec.g().has_bounded_derivative() => Some(m),
        _ => None,
    }
}

/// Exponent `m` of a polynomial bound `g(y) <= C y^m` on the target.
fn target_growth_exponent(spec: &ProblemSpec<f64>) -> Option<f64> {
    match spec.g().kind() {
        WarpKind::Euclidean | WarpKind::Perturbed { .. } => Some(1.0),
        WarpKind::Power { m } => Some(m),
        _ => None,
    }
}

/// Growth rate probed by the exponential-growth test: `a / (2(m-1))` when
/// the target is polynomially bounded with degree `m > 1`, else `a / 2`.
pub fn exponential_probe_rate(spec: &ProblemSpec<f64>) -> Option<f64> {
    let a = spec.f().exp_rate()?;
    Some(match target_growth_exponent(spec) {
        Some(m) if m > 1.0 => a / (2.0 * (m - 1.0)),
        _ => a / 2.0,
    })
}

/// Classifies the tail `[r_end/2, r_end]` of a profile. The result depends
/// only on the nodes and the problem, not on how the run terminated.
pub fn classify_regime(profile: &SolutionProfile<f64>) -> Result<RegimeReport> {
    let n = profile.len();
    if n == 0 {
        return Err(Error::Profile("empty profile".into()));
    }
    let spec = profile.spec();
    let r_end = profile.last().r;
    let tail_start = profile.index_at_or_after(r_end / 2.0);
    let tail_nodes = n - tail_start;
    if tail_nodes < MIN_TAIL_NODES {
        return Err(Error::WindowTooShort {
            lo: r_end / 2.0,
            hi: r_end,
            nodes: tail_nodes,
            required: MIN_TAIL_NODES,
        });
    }
    let tail = [profile.r()[tail_start], r_end];
    let windows = vec![Window {
        name: "tail".into(),
        lo: tail[0],
        hi: tail[1],
        nodes: tail_nodes,
    }];

    let max_alpha = profile.alpha().iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let max_slope = profile.alpha_prime().iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if max_alpha == 0.0 {
        let ev = vec![
            Evidence::new("max_abs_alpha", [profile.r()[0], r_end], 0.0, 0.0, true),
            Evidence::new("max_abs_alpha_prime", [profile.r()[0], r_end], max_slope, 0.0, max_slope == 0.0),
        ];
        return Ok(RegimeReport::new(Regime::Trivial, ev, windows, vec![]));
    }

    let slope_end = profile.last().alpha_prime;
    let increase = profile.last().alpha - profile.alpha()[tail_start];
    let flat = Evidence::new("final_slope", tail, slope_end, FLAT_SLOPE, slope_end < FLAT_SLOPE);
    let plateau = Evidence::new("tail_increase", tail, increase, PLATEAU_INCREASE, increase < PLATEAU_INCREASE);

    if is_hyperbolic_pair(spec) {
        return Ok(classify_hyperbolic(profile, tail_start, tail, windows, flat, plateau));
    }
    if flat.passed && plateau.passed {
        return Ok(RegimeReport::new(Regime::Bounded, vec![flat, plateau], windows, vec![]));
    }
    if power_source(spec).is_some() {
        return Ok(classify_power_source(profile, tail, windows, flat, plateau));
    }
    Ok(classify_growth(profile, tail_start, tail, windows, flat, plateau))
}

fn classify_hyperbolic(
    profile: &SolutionProfile<f64>,
    tail_start: usize,
    tail: [f64; 2],
    windows: Vec<Window>,
    flat: Evidence,
    plateau: Evidence,
) -> RegimeReport {
    let probe = Probe::first(profile);
    match probe {
        Some(p) if p.side == Side::Above => {
            let mut ev = vec![Evidence::new(
                "decisive_probe_gap",
                [p.r, p.r],
                p.alpha - p.r,
                0.0,
                true,
            )];
            let mut last_index = p.index;
            for &c in &SUPER_IDENTITY_LADDER {
                let hit = (last_index..profile.len()).find(|&i| profile.alpha()[i] - profile.r()[i] > c);
                match hit {
                    Some(i) => {
                        let r = profile.r()[i];
                        ev.push(Evidence::new("identity_gap_ladder", [r, r], profile.alpha()[i] - r, c, true));
                        last_index = i;
                    }
                    None => {
                        ev.push(Evidence::new("identity_gap_ladder", tail, f64::NAN, c, false));
                        return RegimeReport::undetermined(
                            ev,
                            windows,
                            format!("alpha - r stays below {c} after the decisive node"),
                        );
                    }
                }
            }
            RegimeReport::new(Regime::SuperIdentity, ev, windows, vec![])
        }
        Some(p) => {
            let probe_ev = Evidence::new("decisive_probe_gap", [p.r, p.r], p.alpha - p.r, 0.0, true);
            if flat.passed && plateau.passed {
                RegimeReport::new(Regime::Bounded, vec![probe_ev, flat, plateau], windows, vec![])
            } else {
                RegimeReport::undetermined(
                    vec![probe_ev, flat, plateau],
                    windows,
                    "below the identity but not yet flat at the end of the run",
                )
            }
        }
        None => {
            let slope_gap = (profile.last().alpha_prime - 1.0).abs();
            let slope_ev = Evidence::new(
                "final_slope_minus_one",
                tail,
                slope_gap,
                IDENTITY_SLOPE_TOL,
                slope_gap < IDENTITY_SLOPE_TOL,
            );
            let x = &profile.r()[tail_start..];
            let gap: Vec<f64> = x
                .iter()
                .zip(&profile.alpha()[tail_start..])
                .map(|(&r, &a)| (a - r).abs())
                .collect();
            let trend = theil_sen(x, &gap, 200).unwrap_or(f64::NAN);
            let trend_ev = Evidence::new("identity_gap_trend", tail, trend, 0.0, trend <= 0.0);
            let notes = vec!["no node beyond ln(3)/2 leaves the identity; trend-based evidence".to_owned()];
            if slope_ev.passed && trend_ev.passed {
                RegimeReport::new(Regime::AsymptoticIdentity, vec![slope_ev, trend_ev], windows, notes)
            } else {
                RegimeReport::new(Regime::Undetermined, vec![slope_ev, trend_ev], windows, notes)
            }
        }
    }
}

fn classify_power_source(
    profile: &SolutionProfile<f64>,
    tail: [f64; 2],
    windows: Vec<Window>,
    flat: Evidence,
    plateau: Evidence,
) -> RegimeReport {
    let fit = match fit_asymptotic_exponent(profile, (tail[0], tail[1])) {
        Ok(fit) => fit,
        Err(e) => return RegimeReport::undetermined(vec![flat, plateau], windows, e.to_string()),
    };
    let rms_ev = Evidence::new("slope_fit_rms", tail, fit.fit_residual, POWER_FIT_RMS, fit.fit_residual < POWER_FIT_RMS);
    let exponent_ev = Evidence::new("slope_exponent", tail, fit.exponent, -1.0, fit.exponent < -1.0);
    if !rms_ev.passed {
        return RegimeReport::undetermined(
            vec![exponent_ev, rms_ev, flat, plateau],
            windows,
            "alpha' does not follow a power law on the tail",
        );
    }
    if exponent_ev.passed {
        // The remaining increase ∫_{r_end}^∞ A r^e dr is finite.
        let remainder = fit.amplitude * tail[1].powf(fit.exponent + 1.0) / (-fit.exponent - 1.0);
        let remainder_ev = Evidence::new("extrapolated_remaining_increase", [tail[1], f64::INFINITY], remainder, f64::INFINITY, remainder.is_finite());
        RegimeReport::new(Regime::Bounded, vec![exponent_ev, rms_ev, remainder_ev], windows, vec![])
    } else {
        RegimeReport::new(
            Regime::PowerSlopeDecay(fit.exponent),
            vec![exponent_ev, rms_ev, plateau],
            windows,
            vec![],
        )
    }
}

fn classify_growth(
    profile: &SolutionProfile<f64>,
    tail_start: usize,
    tail: [f64; 2],
    windows: Vec<Window>,
    flat: Evidence,
    plateau: Evidence,
) -> RegimeReport {
    let spec = profile.spec();
    let x = &profile.r()[tail_start..];
    let alpha = &profile.alpha()[tail_start..];
    let slopes = &profile.alpha_prime()[tail_start..];

    if let Some(rate) = exponential_probe_rate(spec) {
        if alpha.iter().all(|&a| a > 0.0) {
            let logs: Vec<f64> = alpha.iter().map(|a| a.ln()).collect();
            if let Some(fit) = least_squares(x, &logs) {
                if fit.slope >= rate {
                    let ev = vec![
                        Evidence::new("log_alpha_slope", tail, fit.slope, rate, true),
                        Evidence::new("log_alpha_fit_rms", tail, fit.rms, POWER_FIT_RMS, fit.rms < POWER_FIT_RMS),
                        Evidence::new("min_tail_slope", tail, slopes.iter().fold(f64::INFINITY, |m, &v| m.min(v)), 0.0, slopes.iter().all(|&v| v > 0.0)),
                    ];
                    return RegimeReport::new(Regime::ExponentialGrowth(fit.slope), ev, windows, vec![format!("probe rate {rate}")]);
                }
            }
        }
    }

    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let spread = slopes.iter().fold(0.0f64, |m, &v| m.max((v - mean).abs())) / mean.abs().max(f64::MIN_POSITIVE);
    let spread_ev = Evidence::new("tail_slope_spread", tail, spread, LINEAR_SLOPE_SPREAD, spread < LINEAR_SLOPE_SPREAD);
    match least_squares(x, alpha) {
        Some(fit) if spread_ev.passed && fit.slope > 0.0 => {
            let scale = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            let rel = fit.rms / scale;
            let rms_ev = Evidence::new("linear_fit_relative_rms", tail, rel, LINEAR_SLOPE_SPREAD, rel < LINEAR_SLOPE_SPREAD);
            if rms_ev.passed {
                return RegimeReport::new(Regime::LinearGrowth(fit.slope), vec![spread_ev, rms_ev], windows, vec![]);
            }
            RegimeReport::undetermined(vec![spread_ev, rms_ev, flat, plateau], windows, "no regime test is decisive")
        }
        _ => RegimeReport::undetermined(vec![spread_ev, flat, plateau], windows, "no regime test is decisive"),
    }
}

/// Regime predicted by theory for a problem and initial slope.
///
/// * `f = r^δ` (`δ > 1`) with bounded `g'`: bounded iff `(n-1)δ > 2q-1`,
///   otherwise `α' ~ r^{-(n-1)δ/(2q-1)}`.
/// * `f = g = r`: `α = α₀ r`.
/// * exponentially growing `f` with bounded `g'` and `p > 2`: bounded.
/// * `f = g = sinh`: the identity for `α₀ = 1`; otherwise decided by the
///   side of the identity at an observed node beyond `ln(3)/2`.
pub fn predict_regime(spec: &ProblemSpec<f64>, alpha0: f64, observed: Option<&Probe>) -> Result<Regime> {
    let n1 = (spec.n() - 1) as f64;
    let q = spec.q();
    if let Some(delta) = power_source(spec) {
        return Ok(if n1 * delta > 2.0 * q - 1.0 {
            Regime::Bounded
        } else {
            Regime::PowerSlopeDecay(-n1 * delta / (2.0 * q - 1.0))
        });
    }
    if matches!(spec.f().kind(), WarpKind::Euclidean) && matches!(spec.g().kind(), WarpKind::Euclidean) {
        return Ok(Regime::LinearGrowth(alpha0));
    }
    if is_hyperbolic_pair(spec) {
        if alpha0 == 1.0 {
            return Ok(Regime::AsymptoticIdentity);
        }
        return Ok(match observed.map(|p| p.side) {
            Some(Side::Above) => Regime::SuperIdentity,
            Some(Side::Below) => Regime::Bounded,
            None => Regime::Undetermined,
        });
    }
    if spec.f().exp_rate().is_some() && spec.g().has_bounded_derivative() {
        return Ok(if spec.p() > 2.0 { Regime::Bounded } else { Regime::Undetermined });
    }
    Err(Error::UnsupportedFamily(format!("{} -> {}", spec.f(), spec.g())))
}

/// Whether an observed regime contradicts a predicted one.
pub fn contradicts(predicted: Regime, observed: Regime) -> bool {
    match (predicted.is_bounded(), observed.is_bounded()) {
        (Some(a), Some(b)) if a != b => true,
        _ => {
            matches!(
                (predicted, observed),
                (Regime::SuperIdentity, Regime::AsymptoticIdentity)
                    | (Regime::AsymptoticIdentity, Regime::SuperIdentity)
            )
        }
    }
}
