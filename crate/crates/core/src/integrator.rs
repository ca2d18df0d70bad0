//! Continuation of a solution from an interior state to large radii with an
//! adaptive Dormand–Prince 5(4) pair.
//!
//! Stages are formed from increments relative to the first stage,
//! `y + h (c_i k₁ + Σ a_ij (k_j - k₁))`, so a right-hand side that is constant
//! along the trajectory (the identity map, linear maps of flat space) is
//! reproduced without rounding drift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local::{picard_solve, LocalSummary, PicardOptions, DEFAULT_EPSILON_HINT};
use crate::ode::{energy_density, second_derivative, ProblemSpec, StatePoint};
use crate::scalar::Real;

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the fifth and fourth order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Default relative tolerance of a run.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "r")]
pub enum TerminationEvent<T> {
    ReachedRMax,
    DerivativeBlowUp(T),
    EnergyDegenerate(T),
    StepUnderflow(T),
}

impl<T: Real> TerminationEvent<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ReachedRMax => "ReachedRMax",
            Self::DerivativeBlowUp(_) => "DerivativeBlowUp",
            Self::EnergyDegenerate(_) => "EnergyDegenerate",
            Self::StepUnderflow(_) => "StepUnderflow",
        }
    }

    pub fn radius(&self) -> Option<T> {
        match *self {
            Self::ReachedRMax => None,
            Self::DerivativeBlowUp(r) | Self::EnergyDegenerate(r) | Self::StepUnderflow(r) => Some(r),
        }
    }

    /// Parses the `name` or `name@r` form used in tables.
    pub fn parse(text: &str) -> Option<Self> {
        let (name, r) = match text.split_once('@') {
            Some((name, r)) => (name, Some(T::lit(r.trim().parse::<f64>().ok()?))),
            None => (text, None),
        };
        match (name.trim(), r) {
            ("ReachedRMax", None) => Some(Self::ReachedRMax),
            ("DerivativeBlowUp", Some(r)) => Some(Self::DerivativeBlowUp(r)),
            ("EnergyDegenerate", Some(r)) => Some(Self::EnergyDegenerate(r)),
            ("StepUnderflow", Some(r)) => Some(Self::StepUnderflow(r)),
            _ => None,
        }
    }
}

impl<T: Real> std::fmt::Display for TerminationEvent<T> {
    fn fmt(&self, out: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.radius() {
            None => write!(out, "{}", self.name()),
            Some(r) => write!(out, "{}@{:.6e}", self.name(), r.as_f64()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats<T> {
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: T,
}

/// Step control of the continuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorOptions<T> {
    /// `|α'|` above which the run stops as a blow-up.
    pub blowup_cap: T,
    /// Smallest step relative to `r`.
    pub h_min_rel: T,
    /// Forced output nodes per decade of `r`.
    pub per_decade: usize,
    /// Forced output nodes spread uniformly over the range.
    pub uniform_nodes: usize,
    pub max_steps: usize,
}

impl<T: Real> Default for IntegratorOptions<T> {
    fn default() -> Self {
        Self {
            blowup_cap: T::lit(1e12),
            h_min_rel: T::lit(1e-14),
            per_decade: 50,
            uniform_nodes: 400,
            max_steps: 5_000_000,
        }
    }
}

/// Options of the full startup-plus-continuation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions<T> {
    pub epsilon_hint: T,
    pub picard: PicardOptions<T>,
    pub integrator: IntegratorOptions<T>,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            epsilon_hint: T::lit(DEFAULT_EPSILON_HINT),
            picard: PicardOptions::default(),
            integrator: IntegratorOptions::default(),
        }
    }
}

/// A computed radial profile on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionProfile<T> {
    spec: ProblemSpec<T>,
    handoff_r: T,
    r: Vec<T>,
    alpha: Vec<T>,
    alpha_prime: Vec<T>,
    theta: Vec<T>,
    alpha_pp: Vec<T>,
    termination: TerminationEvent<T>,
    stats: IntegrationStats<T>,
    local: Option<LocalSummary<T>>,
}

impl<T: Real> SolutionProfile<T> {
    /// Assembles a profile from node values, recomputing `θ`. The handoff
    /// radius is taken to be the first node.
    pub fn from_nodes(
        spec: ProblemSpec<T>,
        r: Vec<T>,
        alpha: Vec<T>,
        alpha_prime: Vec<T>,
        termination: TerminationEvent<T>,
    ) -> Result<Self> {
        if r.is_empty() || r.len() != alpha.len() || r.len() != alpha_prime.len() {
            return Err(Error::Profile(format!(
                "node columns have lengths {}, {}, {}",
                r.len(),
                alpha.len(),
                alpha_prime.len()
            )));
        }
        if let Some(i) = r.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Profile(format!("radii not increasing at node {}", i + 1)));
        }
        if !(r[0] > T::zero()) {
            return Err(Error::Profile("radii must be positive".into()));
        }
        let mut profile = Self {
            spec,
            handoff_r: r[0],
            theta: Vec::with_capacity(r.len()),
            alpha_pp: Vec::with_capacity(r.len()),
            r: Vec::with_capacity(r.len()),
            alpha: Vec::with_capacity(r.len()),
            alpha_prime: Vec::with_capacity(r.len()),
            termination,
            stats: IntegrationStats {
                accepted: 0,
                rejected: 0,
                min_step: T::zero(),
            },
            local: None,
        };
        for i in 0..r.len() {
            profile.push(StatePoint::new(r[i], alpha[i], alpha_prime[i]))?;
        }
        Ok(profile)
    }

    fn empty(spec: ProblemSpec<T>, handoff_r: T) -> Self {
        Self {
            spec,
            handoff_r,
            r: Vec::new(),
            alpha: Vec::new(),
            alpha_prime: Vec::new(),
            theta: Vec::new(),
            alpha_pp: Vec::new(),
            termination: TerminationEvent::ReachedRMax,
            stats: IntegrationStats {
                accepted: 0,
                rejected: 0,
                min_step: T::infinity(),
            },
            local: None,
        }
    }

    fn push(&mut self, s: StatePoint<T>) -> Result<()> {
        let theta = energy_density(&self.spec, &s)?;
        let app = second_derivative(&self.spec, &s).unwrap_or_else(|_| T::nan());
        self.r.push(s.r);
        self.alpha.push(s.alpha);
        self.alpha_prime.push(s.alpha_prime);
        self.theta.push(theta);
        self.alpha_pp.push(app);
        Ok(())
    }

    pub fn spec(&self) -> &ProblemSpec<T> {
        &self.spec
    }

    /// Radius where the continuation took over from the startup.
    pub fn handoff_r(&self) -> T {
        self.handoff_r
    }

    pub fn r(&self) -> &[T] {
        &self.r
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn alpha_prime(&self) -> &[T] {
        &self.alpha_prime
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn termination(&self) -> TerminationEvent<T> {
        self.termination
    }

    pub fn stats(&self) -> IntegrationStats<T> {
        self.stats
    }

    /// Startup data when the profile began at the origin.
    pub fn local(&self) -> Option<&LocalSummary<T>> {
        self.local.as_ref()
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// `(first node, last node)`.
    pub fn range(&self) -> (T, T) {
        (self.r[0], self.r[self.r.len() - 1])
    }

    pub fn node(&self, i: usize) -> StatePoint<T> {
        StatePoint::new(self.r[i], self.alpha[i], self.alpha_prime[i])
    }

    pub fn last(&self) -> StatePoint<T> {
        self.node(self.len() - 1)
    }

    /// Index of the first node with `r >= x`.
    pub fn index_at_or_after(&self, x: T) -> usize {
        self.r.partition_point(|&r| r < x)
    }

    /// State at any `r` in range by cubic Hermite interpolation of `α` (with
    /// `α'`) and of `α'` (with `α''`).
    pub fn state_at(&self, x: T) -> Result<StatePoint<T>> {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return Err(Error::Range {
                lo: x.as_f64(),
                hi: x.as_f64(),
                grid_lo: lo.as_f64(),
                grid_hi: hi.as_f64(),
            });
        }
        let j = self.r.partition_point(|&r| r < x);
        if self.r[j] == x {
            return Ok(self.node(j));
        }
        let i = j - 1;
        let h = self.r[j] - self.r[i];
        let t = (x - self.r[i]) / h;
        let alpha = hermite(t, h, self.alpha[i], self.alpha[j], self.alpha_prime[i], self.alpha_prime[j]);
        let (app_i, app_j) = (self.alpha_pp[i], self.alpha_pp[j]);
        let alpha_prime = if app_i.is_finite() && app_j.is_finite() {
            hermite(t, h, self.alpha_prime[i], self.alpha_prime[j], app_i, app_j)
        } else {
            self.alpha_prime[i] + t * (self.alpha_prime[j] - self.alpha_prime[i])
        };
        Ok(StatePoint::new(x, alpha, alpha_prime))
    }
}

fn hermite<T: Real>(t: T, h: T, y0: T, y1: T, d0: T, d1: T) -> T {
    let one = T::one();
    let (two, three) = (T::lit(2.0), T::lit(3.0));
    let t2 = t * t;
    let t3 = t2 * t;
    (two * t3 - three * t2 + one) * y0
        + (t3 - two * t2 + t) * h * d0
        + (-two * t3 + three * t2) * y1
        + (t3 - t2) * h * d1
}

/// Continues a solution from `start` to `r_max` with default step control.
pub fn integrate<T: Real>(
    spec: &ProblemSpec<T>,
    start: StatePoint<T>,
    r_max: T,
    tol: T,
) -> Result<SolutionProfile<T>> {
    integrate_with(spec, start, r_max, tol, &IntegratorOptions::default())
}

/// Outcome of one attempted step.
enum Attempt<T> {
    Accepted { y: [T; 2], k_last: [T; 2], err: T },
    Rejected { err: T },
    Degenerate,
}

pub fn integrate_with<T: Real>(
    spec: &ProblemSpec<T>,
    start: StatePoint<T>,
    r_max: T,
    tol: T,
    opts: &IntegratorOptions<T>,
) -> Result<SolutionProfile<T>> {
    if !(start.r > T::zero()) || !start.r.is_finite() {
        return Err(Error::InvalidStart(format!("start radius {} must be positive", start.r)));
    }
    if !(start.alpha > T::zero()) || !start.alpha_prime.is_finite() {
        return Err(Error::InvalidStart(format!(
            "start state ({}, {}) must have positive alpha and finite slope",
            start.alpha, start.alpha_prime
        )));
    }
    if !(r_max > start.r) || !r_max.is_finite() {
        return Err(Error::InvalidStart(format!(
            "r_max = {r_max} must exceed the start radius {}",
            start.r
        )));
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidStart(format!("tolerance {tol} must be positive")));
    }
    let theta0 = energy_density(spec, &start)?;
    if !(theta0 > spec.theta_min()) {
        return Err(Error::DegenerateState {
            r: start.r.as_f64(),
            theta: theta0.as_f64(),
        });
    }

    let mut profile = SolutionProfile::empty(*spec, start.r);
    profile.push(start)?;
    let rhs = |r: T, y: &[T; 2]| -> Result<[T; 2]> {
        Ok([y[1], second_derivative(spec, &StatePoint::new(r, y[0], y[1]))?])
    };

    let reports = report_grid(start.r, r_max, opts);
    let mut next = 0;
    let mut r = start.r;
    let mut y = [start.alpha, start.alpha_prime];
    let mut k1 = rhs(r, &y)?;
    let mut h = initial_step(&rhs, r, &y, &k1, r_max, tol);
    let h_floor = |r: T| opts.h_min_rel * r;
    let mut steps = 0;

    let termination = loop {
        if next >= reports.len() {
            break TerminationEvent::ReachedRMax;
        }
        steps += 1;
        if steps > opts.max_steps || h < h_floor(r) || !h.is_finite() {
            break TerminationEvent::StepUnderflow(r);
        }
        let target = reports[next];
        let clipped = r + h >= target;
        let step = if clipped { target - r } else { h };

        match attempt(&rhs, r, &y, &k1, step, tol) {
            Attempt::Degenerate => break TerminationEvent::EnergyDegenerate(r),
            Attempt::Rejected { err } => {
                profile.stats.rejected += 1;
                let fac = if err.is_finite() {
                    (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.2))
                } else {
                    T::lit(0.25)
                };
                h = step * fac.min(T::one());
            }
            Attempt::Accepted { y: y_new, k_last, err } => {
                r = r + step;
                y = y_new;
                k1 = k_last;
                profile.stats.accepted += 1;
                profile.stats.min_step = profile.stats.min_step.min(step);
                let state = StatePoint::new(r, y[0], y[1]);
                if !(y[1] > T::zero()) {
                    return Err(Error::MonotonicityViolation {
                        r: r.as_f64(),
                        alpha_prime: y[1].as_f64(),
                    });
                }
                profile.push(state)?;
                let theta = profile.theta[profile.theta.len() - 1];
                if !(theta > spec.theta_min()) {
                    break TerminationEvent::EnergyDegenerate(r);
                }
                if y[1].abs() > opts.blowup_cap {
                    break TerminationEvent::DerivativeBlowUp(r);
                }
                while next < reports.len() && reports[next] <= r * (T::one() + T::epsilon()) {
                    next += 1;
                }
                let fac = if err > T::zero() {
                    (T::lit(0.9) * err.powf(T::lit(-0.2))).min(T::lit(5.0)).max(T::lit(0.2))
                } else {
                    T::lit(5.0)
                };
                let basis = if clipped { h.max(step) } else { step };
                h = (basis * fac).min(r_max - start.r);
            }
        }
    };
    profile.termination = termination;
    Ok(profile)
}

fn scaled_norm<T: Real>(e: &[T; 2], y0: &[T; 2], y1: &[T; 2], tol: T) -> T {
    // α carries an absolute floor; α' is controlled relative to itself only,
    // since it decays by tens of orders of magnitude on bounded solutions.
    let s0 = tol + tol * y0[0].abs().max(y1[0].abs());
    let s1 = tol * y0[1].abs().max(y1[1].abs()) + T::min_positive_value();
    let (a, b) = (e[0] / s0, e[1] / s1);
    ((a * a + b * b) / T::lit(2.0)).sqrt()
}

fn initial_step<T: Real>(
    rhs: &impl Fn(T, &[T; 2]) -> Result<[T; 2]>,
    r: T,
    y: &[T; 2],
    k: &[T; 2],
    r_max: T,
    tol: T,
) -> T {
    let d0 = scaled_norm(y, y, y, tol);
    let d1 = scaled_norm(k, y, y, tol);
    let span = r_max - r;
    let mut h0 = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
        T::lit(1e-6) * r
    } else {
        T::lit(0.01) * d0 / d1
    };
    h0 = h0.min(span).min(r);
    let y1 = [y[0] + h0 * k[0], y[1] + h0 * k[1]];
    let d2 = match rhs(r + h0, &y1) {
        Ok(k1) => scaled_norm(&[k1[0] - k[0], k1[1] - k[1]], y, y, tol) / h0,
        Err(_) => return h0 * T::lit(1e-3),
    };
    let dm = d1.max(d2);
    let h1 = if dm <= T::lit(1e-15) {
        (h0 * T::lit(1e-3)).max(T::lit(1e-6) * r)
    } else {
        (T::lit(0.01) / dm).powf(T::lit(0.2))
    };
    (T::lit(100.0) * h0).min(h1).min(span)
}

fn attempt<T: Real>(
    rhs: &impl Fn(T, &[T; 2]) -> Result<[T; 2]>,
    r: T,
    y: &[T; 2],
    k1: &[T; 2],
    h: T,
    tol: T,
) -> Attempt<T> {
    let mut k = [[T::zero(); 2]; 7];
    k[0] = *k1;
    // The last stage row holds the fifth-order weights, so its state is the
    // new solution.
    let mut y_new = *y;
    for i in 1..7 {
        let mut stage = [T::zero(); 2];
        for (c, stage_c) in stage.iter_mut().enumerate() {
            let mut inc = T::lit(C[i]) * k[0][c];
            for j in 1..i {
                inc = inc + T::lit(A[i][j]) * (k[j][c] - k[0][c]);
            }
            *stage_c = y[c] + h * inc;
        }
        let ri = if i >= 5 { r + h } else { r + T::lit(C[i]) * h };
        match rhs(ri, &stage) {
            Ok(v) if v[0].is_finite() && v[1].is_finite() => k[i] = v,
            Ok(_) => return Attempt::Rejected { err: T::infinity() },
            Err(Error::DegenerateState { .. }) => return Attempt::Degenerate,
            Err(_) => return Attempt::Rejected { err: T::infinity() },
        }
        y_new = stage;
    }
    let mut err = [T::zero(); 2];
    for (c, e_c) in err.iter_mut().enumerate() {
        let mut e = T::zero();
        for j in 1..7 {
            e = e + T::lit(E[j]) * (k[j][c] - k[0][c]);
        }
        *e_c = h * e;
    }
    let norm = scaled_norm(&err, y, &y_new, tol);
    if !(norm <= T::one()) || !y_new[0].is_finite() || !y_new[1].is_finite() {
        return Attempt::Rejected { err: norm };
    }
    Attempt::Accepted {
        y: y_new,
        k_last: k[6],
        err: norm,
    }
}

/// Forced output radii in `(r0, r_max]`: log-spaced plus uniform, ending at
/// `r_max`.
fn report_grid<T: Real>(r0: T, r_max: T, opts: &IntegratorOptions<T>) -> Vec<T> {
    let mut nodes = Vec::new();
    if opts.per_decade > 0 {
        let ratio = T::lit(10.0).powf(T::one() / T::from_usize_lossy(opts.per_decade));
        let mut x = r0 * ratio;
        while x < r_max {
            nodes.push(x);
            x = x * ratio;
        }
    }
    let span = r_max - r0;
    for i in 1..opts.uniform_nodes {
        nodes.push(r0 + span * T::from_usize_lossy(i) / T::from_usize_lossy(opts.uniform_nodes));
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite report radii"));
    let gap = r_max * T::lit(1e-12);
    let mut out: Vec<T> = Vec::with_capacity(nodes.len() + 1);
    for x in nodes {
        if x > r0 + gap && x < r_max - gap && out.last().is_none_or(|&l| x - l > gap) {
            out.push(x);
        }
    }
    out.push(r_max);
    out
}

/// Startup at the origin followed by continuation to `r_max`.
pub fn solve<T: Real>(
    spec: &ProblemSpec<T>,
    alpha0: T,
    r_max: T,
    tol: T,
) -> Result<SolutionProfile<T>> {
    solve_with(spec, alpha0, r_max, tol, &SolveOptions::default())
}

pub fn solve_with<T: Real>(
    spec: &ProblemSpec<T>,
    alpha0: T,
    r_max: T,
    tol: T,
    opts: &SolveOptions<T>,
) -> Result<SolutionProfile<T>> {
    if !(r_max > T::zero()) {
        return Err(Error::InvalidStart(format!("r_max = {r_max} must be positive")));
    }
    let hint = opts.epsilon_hint.min(r_max / T::lit(2.0));
    let local = picard_solve(spec, alpha0, hint, &opts.picard)?;
    let handoff = local.handoff();
    let tail = integrate_with(spec, handoff, r_max, tol, &opts.integrator)?;

    let mut profile = SolutionProfile::empty(*spec, handoff.r);
    let interior = local.grid().len() - 1;
    let nodes = local.grid().iter().zip(local.z_values()).zip(local.z_prime_values());
    for ((&s, &z), &zp) in nodes.take(interior).skip(1) {
        profile.push(StatePoint::new(s, s * z, z + s * zp))?;
    }
    profile.r.extend_from_slice(&tail.r);
    profile.alpha.extend_from_slice(&tail.alpha);
    profile.alpha_prime.extend_from_slice(&tail.alpha_prime);
    profile.theta.extend_from_slice(&tail.theta);
    profile.alpha_pp.extend_from_slice(&tail.alpha_pp);
    profile.termination = tail.termination;
    profile.stats = tail.stats;
    profile.local = Some(local.summary());
    Ok(profile)
}

/// Continuation from an interior state, for warps that do not admit the
/// startup at the origin.
pub fn solve_from<T: Real>(
    spec: &ProblemSpec<T>,
    start: StatePoint<T>,
    r_max: T,
    tol: T,
) -> Result<SolutionProfile<T>> {
    integrate(spec, start, r_max, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local::picard_solve;
    use crate::warp::WarpProfile;

    fn spec(n: usize, p: f64, f: WarpProfile<f64>, g: WarpProfile<f64>) -> ProblemSpec<f64> {
        ProblemSpec::new(n, p, f, g).unwrap()
    }

    fn hh(n: usize, p: f64) -> ProblemSpec<f64> {
        spec(n, p, WarpProfile::hyperbolic(), WarpProfile::hyperbolic())
    }

    fn ee(n: usize, p: f64) -> ProblemSpec<f64> {
        spec(n, p, WarpProfile::euclidean(), WarpProfile::euclidean())
    }

    #[test]
    fn identity_is_preserved() {
        let prof = integrate(&hh(3, 3.0), StatePoint::new(0.1, 0.1, 1.0), 10.0, 1e-10).unwrap();
        assert_eq!(prof.termination(), TerminationEvent::ReachedRMax);
        let last = prof.last();
        assert!((last.r - 10.0).abs() < 1e-12);
        for i in 0..prof.len() {
            assert!((prof.alpha()[i] - prof.r()[i]).abs() < 1e-6);
        }
        assert!((last.alpha - 10.0).abs() < 1e-6);
    }

    #[test]
    fn flat_linear_map_is_preserved() {
        let prof = integrate(&ee(2, 4.0), StatePoint::new(1.0, 0.3, 0.3), 100.0, 1e-10).unwrap();
        assert!((prof.last().alpha - 30.0).abs() < 1e-8);
    }

    #[test]
    fn hyperbolic_below_identity_flattens() {
        let prof = integrate(&hh(3, 3.0), StatePoint::new(1.0, 0.5, 0.5), 30.0, 1e-10).unwrap();
        assert_eq!(prof.termination(), TerminationEvent::ReachedRMax);
        let last = prof.last();
        assert!(last.alpha_prime < 1e-3 && last.alpha_prime > 0.0);
        let finer = integrate(&hh(3, 3.0), StatePoint::new(1.0, 0.5, 0.5), 30.0, 5e-11).unwrap();
        assert!((finer.last().alpha - last.alpha).abs() < 1e-9 * (1.0 + last.alpha));
    }

    #[test]
    fn theta_matches_the_nodes() {
        let prof = integrate(&hh(3, 4.0), StatePoint::new(0.5, 0.3, 0.7), 8.0, 1e-10).unwrap();
        for i in 0..prof.len() {
            let t = energy_density(prof.spec(), &prof.node(i)).unwrap();
            assert!((t - prof.theta()[i]).abs() <= 1e-12 * t);
        }
        assert!(prof.r().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(prof.r()[0], prof.handoff_r());
    }

    #[test]
    fn above_identity_blows_up() {
        let h = hh(3, 3.0);
        let prof = solve(&h, 2.0, 30.0, 1e-10).unwrap();
        match prof.termination() {
            TerminationEvent::DerivativeBlowUp(r) | TerminationEvent::StepUnderflow(r) => {
                assert!(r > 1.0 && r < 1.2, "blow-up radius {r}");
            }
            other => panic!("unexpected termination {other}"),
        }
    }

    #[test]
    fn flat_solve_is_linear() {
        let prof = solve(&ee(3, 4.0), 2.0, 50.0, 1e-10).unwrap();
        assert_eq!(prof.termination(), TerminationEvent::ReachedRMax);
        for i in 0..prof.len() {
            assert!((prof.alpha()[i] - 2.0 * prof.r()[i]).abs() <= 1e-12 * prof.r()[i]);
        }
    }

    #[test]
    fn hyperbolic_identity_solve() {
        let prof = solve(&hh(3, 4.0), 1.0, 20.0, 1e-10).unwrap();
        for i in 0..prof.len() {
            assert!((prof.alpha()[i] - prof.r()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn hyperbolic_to_flat_is_bounded() {
        let s = spec(3, 3.0, WarpProfile::hyperbolic(), WarpProfile::euclidean());
        let prof = solve(&s, 1.0, 40.0, 1e-10).unwrap();
        assert_eq!(prof.termination(), TerminationEvent::ReachedRMax);
        let mid = prof.state_at(20.0).unwrap();
        assert!(prof.last().alpha - mid.alpha < 1e-3);
    }

    #[test]
    fn seam_is_continuous() {
        let s = spec(3, 4.0, WarpProfile::perturbed(1.0).unwrap(), WarpProfile::hyperbolic());
        let local = picard_solve(&s, 1.0, 0.1, &PicardOptions::default()).unwrap();
        let eps = local.epsilon();
        let start = local.state_at(eps / 2.0).unwrap();
        let prof = integrate(&s, start, eps, 1e-12).unwrap();
        let (end, handoff) = (prof.last(), local.handoff());
        assert!((end.alpha - handoff.alpha).abs() < 1e-9);
        assert!((end.alpha_prime - handoff.alpha_prime).abs() < 1e-9);
    }

    #[test]
    fn solve_prepends_the_startup_grid() {
        let s = spec(3, 4.0, WarpProfile::perturbed(0.5).unwrap(), WarpProfile::euclidean());
        let prof = solve(&s, 1.0, 5.0, 1e-10).unwrap();
        let local = prof.local().unwrap();
        assert!(prof.r()[0] < local.epsilon * 1e-5);
        assert!(prof.r().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(prof.handoff_r(), local.epsilon);
    }

    #[test]
    fn interpolation_hits_nodes_and_linear_maps() {
        let prof = integrate(&ee(3, 4.0), StatePoint::new(1.0, 0.5, 0.5), 9.0, 1e-10).unwrap();
        for &x in &[1.0, 1.37, 4.2, 9.0] {
            let s = prof.state_at(x).unwrap();
            assert!((s.alpha - 0.5 * x).abs() < 1e-12);
            assert!((s.alpha_prime - 0.5).abs() < 1e-12);
        }
        assert!(prof.state_at(0.5).is_err());
    }

    #[test]
    fn rejects_bad_starts() {
        let h = hh(3, 3.0);
        assert!(integrate(&h, StatePoint::new(0.0, 0.1, 1.0), 1.0, 1e-10).is_err());
        assert!(integrate(&h, StatePoint::new(1.0, 1.0, 1.0), 0.5, 1e-10).is_err());
        assert!(integrate(&h, StatePoint::new(1.0, -1.0, 1.0), 2.0, 1e-10).is_err());
    }

    #[test]
    fn termination_text_round_trips() {
        for ev in [
            TerminationEvent::ReachedRMax,
            TerminationEvent::DerivativeBlowUp(1.25),
            TerminationEvent::StepUnderflow(3.0),
        ] {
            assert_eq!(TerminationEvent::<f64>::parse(&ev.to_string()), Some(ev));
        }
    }

    #[test]
    fn f32_identity_run() {
        let s = ProblemSpec::<f32>::new(3, 3.0, WarpProfile::hyperbolic(), WarpProfile::hyperbolic()).unwrap();
        let prof = integrate(&s, StatePoint::new(0.5f32, 0.5, 1.0), 4.0, 1e-5).unwrap();
        assert!((prof.last().alpha - 4.0).abs() < 1e-4);
    }
}
