//! Warp functions of the model manifolds `M(f) = ([0,∞) × S^{n-1}, dr² + f(r)² dϑ²)`.
//!
//! Every built-in warp carries an analytic first and second derivative. The
//! solver never differentiates a warp numerically: the right-hand side of the
//! Euler–Lagrange equation divides by `f` and is sensitive to `f'/f` near the
//! origin.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// The families of warp functions the solver knows about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WarpKind<T> {
    /// `f(r) = r`.
    Euclidean,
    /// `f(r) = sinh r`.
    Hyperbolic,
    /// `f(r) = r^m`, `m >= 1`.
    Power { m: T },
    /// `f(r) = sinh(a r) / a`, two-sided exponential growth with rate `a`.
    #[serde(rename = "exp")]
    ExpGrowth { a: T },
    /// `f(r) = r + c2 h(r)` with `h(r) = r²` on `[0, 1]`, a C² quintic blend
    /// on `[1, 2]`, and `h = 5/2` beyond, so `f` grows with slope 1.
    Perturbed { c2: T },
}

/// Plateau value of the perturbation shape beyond `r = 2`.
const BLEND_PLATEAU: f64 = 2.5;

/// A validated warp function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpProfile<T> {
    kind: WarpKind<T>,
}

impl<T: Real> WarpProfile<T> {
    pub fn new(kind: WarpKind<T>) -> Result<Self> {
        match kind {
            WarpKind::Power { m } if !(m >= T::one()) || !m.is_finite() => {
                Err(Error::InvalidWarpParameter {
                    kind: "power",
                    detail: format!("exponent m = {m} must satisfy m >= 1"),
                })
            }
            WarpKind::ExpGrowth { a } if !(a > T::zero()) || !a.is_finite() => {
                Err(Error::InvalidWarpParameter {
                    kind: "exp",
                    detail: format!("rate a = {a} must be positive"),
                })
            }
            WarpKind::Perturbed { c2 } if !c2.is_finite() => Err(Error::InvalidWarpParameter {
                kind: "perturbed",
                detail: format!("coefficient c2 = {c2} must be finite"),
            }),
            _ => Ok(Self { kind }),
        }
    }

    pub fn euclidean() -> Self {
        Self {
            kind: WarpKind::Euclidean,
        }
    }

    pub fn hyperbolic() -> Self {
        Self {
            kind: WarpKind::Hyperbolic,
        }
    }

    pub fn power(m: T) -> Result<Self> {
        Self::new(WarpKind::Power { m })
    }

    pub fn exp_growth(a: T) -> Result<Self> {
        Self::new(WarpKind::ExpGrowth { a })
    }

    pub fn perturbed(c2: T) -> Result<Self> {
        Self::new(WarpKind::Perturbed { c2 })
    }

    /// Builds a profile from its config name (`euclidean`, `hyperbolic`,
    /// `power`, `exp`, `perturbed`) and a parameter lookup.
    pub fn from_name(name: &str, param: impl Fn(&str) -> Option<T>) -> Result<Self> {
        let need = |key: &'static str, kind: &'static str| {
            param(key).ok_or_else(|| Error::InvalidWarpParameter {
                kind,
                detail: format!("missing parameter `{key}`"),
            })
        };
        match name {
            "euclidean" => Ok(Self::euclidean()),
            "hyperbolic" => Ok(Self::hyperbolic()),
            "power" => Self::power(need("m", "power")?),
            "exp" => Self::exp_growth(need("a", "exp")?),
            "perturbed" => Self::perturbed(need("c2", "perturbed")?),
            other => Err(Error::InvalidWarpParameter {
                kind: "unknown",
                detail: format!("no warp kind named `{other}`"),
            }),
        }
    }

    pub fn kind(&self) -> WarpKind<T> {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            WarpKind::Euclidean => "euclidean",
            WarpKind::Hyperbolic => "hyperbolic",
            WarpKind::Power { .. } => "power",
            WarpKind::ExpGrowth { .. } => "exp",
            WarpKind::Perturbed { .. } => "perturbed",
        }
    }

    /// Named parameters in config order.
    pub fn params(&self) -> Vec<(&'static str, T)> {
        match self.kind {
            WarpKind::Euclidean | WarpKind::Hyperbolic => vec![],
            WarpKind::Power { m } => vec![("m", m)],
            WarpKind::ExpGrowth { a } => vec![("a", a)],
            WarpKind::Perturbed { c2 } => vec![("c2", c2)],
        }
    }

    /// Whether `f(0) = 0` and `f'(0) = 1`, which the singular startup needs.
    pub fn startup_admissible(&self) -> bool {
        match self.kind {
            WarpKind::Power { m } => m == T::one(),
            _ => true,
        }
    }

    /// The coefficient `c` in `f(r) = r + c r² + o(r²)`; `None` for warps
    /// that are not startup-admissible.
    pub fn taylor_c2(&self) -> Option<T> {
        match self.kind {
            WarpKind::Euclidean | WarpKind::Hyperbolic | WarpKind::ExpGrowth { .. } => {
                Some(T::zero())
            }
            WarpKind::Power { m } if m == T::one() => Some(T::zero()),
            WarpKind::Power { .. } => None,
            WarpKind::Perturbed { c2 } => Some(c2),
        }
    }

    /// Polynomial degree for `f = r^m` families (Euclidean counts as `m = 1`).
    pub fn power_exponent(&self) -> Option<T> {
        match self.kind {
            WarpKind::Euclidean => Some(T::one()),
            WarpKind::Power { m } => Some(m),
            _ => None,
        }
    }

    /// Exponential rate for warps satisfying the two-sided exponential
    /// growth condition.
    pub fn exp_rate(&self) -> Option<T> {
        match self.kind {
            WarpKind::Hyperbolic => Some(T::one()),
            WarpKind::ExpGrowth { a } => Some(a),
            _ => None,
        }
    }

    /// Whether `f'` is globally bounded, which the continuation argument needs
    /// of the target warp.
    pub fn has_bounded_derivative(&self) -> bool {
        match self.kind {
            WarpKind::Euclidean | WarpKind::Perturbed { .. } => true,
            WarpKind::Power { m } => m == T::one(),
            WarpKind::Hyperbolic | WarpKind::ExpGrowth { .. } => false,
        }
    }

    pub fn eval(&self, r: T) -> T {
        match self.kind {
            WarpKind::Euclidean => r,
            WarpKind::Hyperbolic => r.sinh(),
            WarpKind::Power { m } => r.powf(m),
            WarpKind::ExpGrowth { a } => (a * r).sinh() / a,
            WarpKind::Perturbed { c2 } => r + c2 * blend(r).0,
        }
    }

    pub fn deriv(&self, r: T) -> T {
        match self.kind {
            WarpKind::Euclidean => T::one(),
            WarpKind::Hyperbolic => r.cosh(),
            WarpKind::Power { m } => {
                if m == T::one() {
                    T::one()
                } else {
                    m * r.powf(m - T::one())
                }
            }
            WarpKind::ExpGrowth { a } => (a * r).cosh(),
            WarpKind::Perturbed { c2 } => T::one() + c2 * blend(r).1,
        }
    }

    pub fn deriv2(&self, r: T) -> T {
        match self.kind {
            WarpKind::Euclidean => T::zero(),
            WarpKind::Hyperbolic => r.sinh(),
            WarpKind::Power { m } => {
                if m == T::one() {
                    T::zero()
                } else if m == T::lit(2.0) {
                    T::lit(2.0)
                } else {
                    m * (m - T::one()) * r.powf(m - T::lit(2.0))
                }
            }
            WarpKind::ExpGrowth { a } => a * (a * r).sinh(),
            WarpKind::Perturbed { c2 } => c2 * blend(r).2,
        }
    }

    /// `1/r - f'(r)/f(r)`, free of cancellation near the origin.
    pub(crate) fn log_deriv_defect(&self, r: T) -> T {
        match self.kind {
            WarpKind::Euclidean => T::zero(),
            WarpKind::Hyperbolic => coth_defect(r),
            WarpKind::ExpGrowth { a } => a * coth_defect(a * r),
            WarpKind::Perturbed { c2 } if r <= T::one() => -c2 / (T::one() + c2 * r),
            _ => T::one() / r - self.deriv(r) / self.eval(r),
        }
    }

    /// `f(r)/r - 1`, free of cancellation near the origin.
    pub(crate) fn ratio_defect(&self, r: T) -> T {
        match self.kind {
            WarpKind::Euclidean => T::zero(),
            WarpKind::Hyperbolic => sinhc_defect(r),
            WarpKind::ExpGrowth { a } => sinhc_defect(a * r),
            WarpKind::Perturbed { c2 } if r <= T::one() => c2 * r,
            _ => self.eval(r) / r - T::one(),
        }
    }

    /// `f(r) f'(r)/r - 1`, free of cancellation near the origin.
    pub(crate) fn product_defect(&self, r: T) -> T {
        let two = T::lit(2.0);
        match self.kind {
            WarpKind::Euclidean => T::zero(),
            WarpKind::Hyperbolic => sinhc_defect(two * r),
            WarpKind::ExpGrowth { a } => sinhc_defect(two * a * r),
            WarpKind::Perturbed { c2 } if r <= T::one() => c2 * r * (T::lit(3.0) + two * c2 * r),
            _ => self.eval(r) * self.deriv(r) / r - T::one(),
        }
    }

    /// Checks every invariant of the profile at the given sample radii.
    pub fn validate(&self, r_samples: &[T]) -> ValidationReport {
        let tol = T::lit(1e-6).max(T::epsilon().sqrt());
        let mut checks = Vec::new();

        let origin_err = self.eval(T::zero()).abs().max((self.deriv(T::zero()) - T::one()).abs());
        checks.push(InvariantCheck::new(
            "origin",
            origin_err <= T::epsilon(),
            origin_err.as_f64(),
        ));

        let min_value = r_samples
            .iter()
            .map(|&r| self.eval(r))
            .fold(T::infinity(), T::min);
        checks.push(InvariantCheck::new(
            "positivity",
            min_value > T::zero(),
            min_value.as_f64(),
        ));

        let worst = r_samples
            .iter()
            .map(|&r| {
                let h = r * T::epsilon().cbrt();
                let fd = (self.eval(r + h) - self.eval(r - h)) / (h + h);
                let d = self.deriv(r);
                (fd - d).abs() / d.abs().max(T::min_positive_value())
            })
            .fold(T::zero(), T::max);
        checks.push(InvariantCheck::new(
            "derivative_consistency",
            worst < tol,
            worst.as_f64(),
        ));

        match self.taylor_c2() {
            Some(c2) => {
                let estimate = self.richardson_c2();
                let err = (estimate - c2).abs();
                checks.push(InvariantCheck::new("taylor_coefficient", err < tol, err.as_f64()));
            }
            None => checks.push(InvariantCheck {
                name: "taylor_coefficient",
                passed: true,
                worst_error: 0.0,
                applicable: false,
            }),
        }

        ValidationReport { checks }
    }

    /// Estimates `lim (f(r) - r)/r²` from `r ∈ {1e-2, 1e-3, 1e-4}` by two
    /// levels of Richardson extrapolation.
    pub fn richardson_c2(&self) -> T {
        let q = |r: T| (self.eval(r) - r) / (r * r);
        let ten = T::lit(10.0);
        let (q1, q2, q3) = (q(T::lit(1e-2)), q(T::lit(1e-3)), q(T::lit(1e-4)));
        let r1 = (ten * q2 - q1) / T::lit(9.0);
        let r2 = (ten * q3 - q2) / T::lit(9.0);
        (T::lit(100.0) * r2 - r1) / T::lit(99.0)
    }

    /// Checks `(1/C) e^{ar} <= f(r) <= C e^{ar}` and the same bounds on `f'`
    /// at every sample `r >= 1`.
    pub fn satisfies_exp_growth(&self, a: T, c: T, r_samples: &[T]) -> bool {
        r_samples.iter().filter(|&&r| r >= T::one()).all(|&r| {
            let e = (a * r).exp();
            let (lo, hi) = (e / c, e * c);
            let (v, d) = (self.eval(r), self.deriv(r));
            lo <= v && v <= hi && lo <= d && d <= hi
        })
    }

    /// Checks `f'(y) <= C2 f(y)` at every sample `y >= 1`.
    pub fn satisfies_log_derivative_bound(&self, c2: T, y_samples: &[T]) -> bool {
        y_samples
            .iter()
            .filter(|&&y| y >= T::one())
            .all(|&y| self.deriv(y) <= c2 * self.eval(y))
    }
}

impl<T: Real> fmt::Display for WarpProfile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        for (k, v) in self.params() {
            write!(f, "({k}={v})")?;
        }
        Ok(())
    }
}

/// `sinh(x)/x - 1`
fn sinhc_defect<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-2) {
        let x2 = x * x;
        x2 / T::lit(6.0) * (T::one() + x2 / T::lit(20.0) * (T::one() + x2 / T::lit(42.0)))
    } else {
        x.sinh() / x - T::one()
    }
}

/// `1/x - coth(x)`
fn coth_defect<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-2) {
        let x2 = x * x;
        -x * (T::one() / T::lit(3.0) - x2 / T::lit(45.0) + T::lit(2.0) * x2 * x2 / T::lit(945.0))
    } else {
        T::one() / x - T::one() / x.tanh()
    }
}

/// Perturbation shape `h` and its first two derivatives.
fn blend<T: Real>(r: T) -> (T, T, T) {
    let one = T::one();
    let two = T::lit(2.0);
    if r <= one {
        (r * r, two * r, two)
    } else if r < two {
        // Quintic Hermite matching (1, 2, 2) at r = 1 and (5/2, 0, 0) at r = 2.
        let t = r - one;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let h = one + two * t + t2 - T::lit(3.5) * t4 + two * t4 * t;
        let dh = two + two * t - T::lit(14.0) * t3 + T::lit(10.0) * t4;
        let d2h = two - T::lit(42.0) * t2 + T::lit(40.0) * t3;
        (h, dh, d2h)
    } else {
        (T::lit(BLEND_PLATEAU), T::zero(), T::zero())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    pub worst_error: f64,
    pub applicable: bool,
}

impl InvariantCheck {
    fn new(name: &'static str, passed: bool, worst_error: f64) -> Self {
        Self {
            name,
            passed,
            worst_error,
            applicable: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}
