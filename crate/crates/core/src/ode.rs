//! Pointwise mathematics of the rotationally symmetric p-harmonic map
//! equation
//!
//! ```text
//! Θ α'' + [(n-1) Θ f'/f + Θ'] α' - (n-1) Θ g(α) g'(α) / f² = 0,   Θ = θ^{q-1},
//! θ = α'² + (n-1) g(α)² / f²,   q = p/2.
//! ```
//!
//! Expanding `Θ' = (q-1) θ^{q-2} θ'` and collecting the `α''` terms gives the
//! explicit form used by the integrators,
//!
//! ```text
//! α'' = (n-1) [θ (g g'(α)/f - f' α')/f - (q-1) (g²/f²)' α'] / D,
//! D   = (p-1) α'² + (n-1) g(α)²/f².
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::SolutionProfile;
use crate::scalar::Real;
use crate::warp::WarpProfile;

/// Default floor below which the energy density is treated as zero.
pub const DEFAULT_THETA_MIN: f64 = 1e-300;

/// One instance of the equation: dimension `n`, exponent `p`, source warp `f`
/// and target warp `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec<T> {
    n: usize,
    p: T,
    f: WarpProfile<T>,
    g: WarpProfile<T>,
    theta_min: T,
}

impl<T: Real> ProblemSpec<T> {
    pub fn new(n: usize, p: T, f: WarpProfile<T>, g: WarpProfile<T>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidProblem(format!("dimension n = {n} must be >= 2")));
        }
        if !(p >= T::lit(2.0)) || !p.is_finite() {
            return Err(Error::InvalidProblem(format!("exponent p = {p} must be >= 2")));
        }
        Ok(Self {
            n,
            p,
            f,
            g,
            theta_min: T::lit(DEFAULT_THETA_MIN),
        })
    }

    /// Replaces the degenerate-energy floor.
    pub fn with_theta_min(mut self, theta_min: T) -> Self {
        self.theta_min = theta_min;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn q(&self) -> T {
        self.p / T::lit(2.0)
    }

    pub fn f(&self) -> &WarpProfile<T> {
        &self.f
    }

    pub fn g(&self) -> &WarpProfile<T> {
        &self.g
    }

    pub fn theta_min(&self) -> T {
        self.theta_min
    }

    /// `p = 2` reduces the equation to the harmonic map equation.
    pub fn is_harmonic(&self) -> bool {
        self.p == T::lit(2.0)
    }

    pub(crate) fn n_minus_one(&self) -> T {
        T::from_usize_lossy(self.n - 1)
    }
}

/// A point `(r, α(r), α'(r))` of a radial profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePoint<T> {
    pub r: T,
    pub alpha: T,
    pub alpha_prime: T,
}

impl<T: Real> StatePoint<T> {
    pub fn new(r: T, alpha: T, alpha_prime: T) -> Self {
        Self {
            r,
            alpha,
            alpha_prime,
        }
    }
}

/// Warp values at a state, shared by all pointwise formulas.
struct Frame<T> {
    f: T,
    fp: T,
    gp: T,
    /// g(α)/f(r)
    ratio: T,
}

impl<T: Real> Frame<T> {
    fn at(spec: &ProblemSpec<T>, s: &StatePoint<T>) -> Result<Self> {
        if !(s.r > T::zero()) {
            return Err(Error::Domain(format!("radius r = {} must be positive", s.r)));
        }
        let f = spec.f.eval(s.r);
        if f == T::zero() {
            return Err(Error::Domain(format!("f({}) = 0", s.r)));
        }
        let g = spec.g.eval(s.alpha);
        Ok(Self {
            f,
            fp: spec.f.deriv(s.r),
            gp: spec.g.deriv(s.alpha),
            ratio: g / f,
        })
    }

    fn theta(&self, nm1: T, ap: T) -> T {
        ap * ap + nm1 * self.ratio * self.ratio
    }

    /// `(g(α)²/f²)' = 2 (g/f) (g'(α) α' - f' g/f) / f`
    fn ratio_sq_deriv(&self, ap: T) -> T {
        let two = T::lit(2.0);
        two * self.ratio * (self.gp * ap - self.fp * self.ratio) / self.f
    }
}

/// Energy density `θ = α'² + (n-1) g(α)²/f(r)²`.
pub fn energy_density<T: Real>(spec: &ProblemSpec<T>, s: &StatePoint<T>) -> Result<T> {
    let frame = Frame::at(spec, s)?;
    Ok(frame.theta(spec.n_minus_one(), s.alpha_prime))
}

/// Explicit `α''` from the Euler–Lagrange equation.
pub fn second_derivative<T: Real>(spec: &ProblemSpec<T>, s: &StatePoint<T>) -> Result<T> {
    let nm1 = spec.n_minus_one();
    let frame = Frame::at(spec, s)?;
    let ap = s.alpha_prime;
    let theta = frame.theta(nm1, ap);
    if !(theta > spec.theta_min) {
        return Err(Error::DegenerateState {
            r: s.r.as_f64(),
            theta: theta.as_f64(),
        });
    }
    let denom = (spec.p - T::one()) * ap * ap + nm1 * frame.ratio * frame.ratio;
    let numer = theta * (frame.ratio * frame.gp - frame.fp * ap) / frame.f
        - (spec.q() - T::one()) * frame.ratio_sq_deriv(ap) * ap;
    Ok(nm1 * numer / denom)
}

/// The four terms of the Euler–Lagrange operator divided by the common
/// factor `θ^{q-2}`.
fn residual_terms<T: Real>(spec: &ProblemSpec<T>, s: &StatePoint<T>, alpha_pp: T) -> Result<([T; 4], T)> {
    let nm1 = spec.n_minus_one();
    let frame = Frame::at(spec, s)?;
    let ap = s.alpha_prime;
    let theta = frame.theta(nm1, ap);
    if !(theta > spec.theta_min) {
        return Err(Error::DegenerateState {
            r: s.r.as_f64(),
            theta: theta.as_f64(),
        });
    }
    let theta_prime = T::lit(2.0) * ap * alpha_pp + nm1 * frame.ratio_sq_deriv(ap);
    let terms = [
        theta * alpha_pp,
        nm1 * theta * frame.fp / frame.f * ap,
        (spec.q() - T::one()) * theta_prime * ap,
        -(nm1 * theta * frame.ratio * frame.gp / frame.f),
    ];
    Ok((terms, theta.powf(spec.q() - T::lit(2.0))))
}

/// Left-hand side of the Euler–Lagrange equation with `Θ'` expanded by the
/// chain rule.
pub fn residual<T: Real>(spec: &ProblemSpec<T>, s: &StatePoint<T>, alpha_pp: T) -> Result<T> {
    let (terms, weight) = residual_terms(spec, s, alpha_pp)?;
    Ok(weight * terms.iter().fold(T::zero(), |acc, &t| acc + t))
}

/// Sum of the absolute values of the residual's terms; the natural scale for
/// judging a residual against round-off.
pub fn residual_scale<T: Real>(spec: &ProblemSpec<T>, s: &StatePoint<T>, alpha_pp: T) -> Result<T> {
    let (terms, weight) = residual_terms(spec, s, alpha_pp)?;
    Ok(weight * terms.iter().fold(T::zero(), |acc, &t| acc + t.abs()))
}

/// p-energy `∫ θ^{p/2} f^{n-1} dr` of a stored profile over `[r0, r1]`.
///
/// The profile is reconstructed by cubic Hermite interpolation between its
/// nodes and each cell is integrated by adaptive Simpson quadrature.
pub fn p_energy<T: Real>(profile: &SolutionProfile<T>, r0: T, r1: T) -> Result<T> {
    let spec = profile.spec();
    let (lo, hi) = profile.range();
    if !(r0 >= lo && r1 <= hi && r0 <= r1) || !(r0 > T::zero()) {
        return Err(Error::Range {
            lo: r0.as_f64(),
            hi: r1.as_f64(),
            grid_lo: lo.as_f64(),
            grid_hi: hi.as_f64(),
        });
    }
    if r0 == r1 {
        return Ok(T::zero());
    }
    let half_p = spec.p / T::lit(2.0);
    let nm1 = spec.n_minus_one();
    let integrand = |r: T| -> Result<T> {
        let s = profile.state_at(r)?;
        let theta = energy_density(spec, &s)?;
        Ok(theta.powf(half_p) * spec.f.eval(r).powf(nm1))
    };

    let grid = profile.r();
    let mut total = T::zero();
    let mut a = r0;
    let start = grid.partition_point(|&x| x <= r0);
    for &node in grid[start..].iter().chain(std::iter::once(&r1)) {
        let b = node.min(r1);
        if b > a {
            total = total + adaptive_simpson(&integrand, a, b, T::lit(1e-13))?;
            a = b;
        }
        if a >= r1 {
            break;
        }
    }
    Ok(total)
}

fn adaptive_simpson<T: Real>(f: &impl Fn(T) -> Result<T>, a: T, b: T, rel_tol: T) -> Result<T> {
    let half = T::lit(0.5);
    let m = half * (a + b);
    let (fa, fm, fb) = (f(a)?, f(m)?, f(b)?);
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    let tol = rel_tol * whole.abs().max(T::min_positive_value());
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Real>(
    f: &impl Fn(T) -> Result<T>,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> Result<T> {
    let half = T::lit(0.5);
    let m = half * (a + b);
    let (lm, rm) = (half * (a + m), half * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let six = T::lit(6.0);
    let four = T::lit(4.0);
    let left = (m - a) / six * (fa + four * flm + fm);
    let right = (b - m) / six * (fm + four * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
        return Ok(left + right + delta / T::lit(15.0));
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, half * tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, half * tol, depth - 1)?)
}
