//! Startup of the singular initial value problem at `r = 0`.
//!
//! With `α = r z(r)` the Euler–Lagrange equation becomes
//! `r z'' + (n+1) z' = (n-1) Φ(r, √r z', z)`, which integrates to the fixed
//! point system
//!
//! ```text
//! z(r)  = α₀ + (n-1)/n ∫₀ʳ (1 - sⁿ/rⁿ) Φ ds,
//! z'(r) = (n-1) ∫₀ʳ sⁿ Φ ds / r^{n+1},        v = √r z'.
//! ```
//!
//! The system is solved by plain Picard iteration on a geometric grid
//! clustered at the origin, with the limit of `Φ` used at `s = 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{energy_density, residual, second_derivative, ProblemSpec, StatePoint};
use crate::scalar::Real;

const GAUSS_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Tuning of the fixed-point startup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardOptions<T> {
    /// Sup-norm change of `(z, v)` that counts as converged.
    pub tol_fix: T,
    pub max_iter: usize,
    /// Smallest startup radius tried before giving up.
    pub eps_min: T,
    /// Bound on the equation residual at nodes in `[ε/10, ε]`.
    pub tol_res: T,
    /// Ratio between the innermost positive node and `ε`.
    pub grid_span: T,
    /// Target ratio between consecutive positive nodes.
    pub grid_ratio: T,
}

impl<T: Real> Default for PicardOptions<T> {
    fn default() -> Self {
        Self {
            tol_fix: T::lit(1e-12),
            max_iter: 200,
            eps_min: T::lit(1e-10),
            tol_res: T::lit(1e-7),
            grid_span: T::lit(1e-6),
            grid_ratio: T::lit(1.2),
        }
    }
}

/// Default upper bound on the startup radius used by [`crate::solve`].
pub const DEFAULT_EPSILON_HINT: f64 = 0.1;

/// The integrand `Φ(s, v, z)` of the fixed-point system.
///
/// For `s > 0` the logarithmic derivative `A = (θ^{q-1})'/θ^{q-1}` is taken
/// from the explicit `α''`. At `s = 0` the limits
/// `1/s - f'/f → -f₁`, `g g'/f² - z/s → 3g₁z² - 2f₁z` and
/// `A → 2(q-1)(n-1)(4g₁z³ - 4f₁z² - v²) / ((2q+n-2) z²)` are used.
pub fn phi<T: Real>(spec: &ProblemSpec<T>, s: T, v: T, z: T) -> Result<T> {
    if !(z > T::zero()) {
        return Err(Error::Domain(format!("z = {z} must be positive")));
    }
    if !(s >= T::zero()) {
        return Err(Error::Domain(format!("s = {s} must be non-negative")));
    }
    let nm1 = spec.n_minus_one();
    if s == T::zero() {
        let (f1, g1) = taylor_pair(spec)?;
        let (two, three, four) = (T::lit(2.0), T::lit(3.0), T::lit(4.0));
        let q = spec.q();
        let n = T::from_usize_lossy(spec.n());
        let a0 = two * (q - T::one()) * nm1 * (four * g1 * z * z * z - four * f1 * z * z - v * v)
            / ((two * q + n - two) * z * z);
        return Ok(-f1 * z - a0 * z / nm1 + three * g1 * z * z - two * f1 * z);
    }

    let w = s.sqrt() * v + z;
    let state = StatePoint::new(s, s * z, w);
    let app = second_derivative(spec, &state)?;
    let theta = energy_density(spec, &state)?;
    let (f, g) = (spec.f(), spec.g());
    let alpha = s * z;
    let ratio = g.eval(alpha) / f.eval(s);
    let ratio_sq_deriv =
        T::lit(2.0) * ratio * (g.deriv(alpha) * w - f.deriv(s) * ratio) / f.eval(s);
    let theta_prime = T::lit(2.0) * w * app + nm1 * ratio_sq_deriv;
    let a = (spec.q() - T::one()) * theta_prime / theta;

    // g(sz) g'(sz)/f(s)² - z/s = (z/s) [(1 + G)(s/f)² - 1]
    let gd = g.product_defect(alpha);
    let fd = f.ratio_defect(s);
    let inv_sq_defect = -fd * (T::lit(2.0) + fd) / ((T::one() + fd) * (T::one() + fd));
    let target_term = z / s * (gd + inv_sq_defect + gd * inv_sq_defect);

    Ok(f.log_deriv_defect(s) * w - a * w / nm1 + target_term)
}

fn taylor_pair<T: Real>(spec: &ProblemSpec<T>) -> Result<(T, T)> {
    match (spec.f().taylor_c2(), spec.g().taylor_c2()) {
        (Some(f1), Some(g1)) => Ok((f1, g1)),
        _ => Err(Error::NotStartupAdmissible(format!(
            "warps {} -> {} do not satisfy f(0) = 0, f'(0) = 1",
            spec.f(),
            spec.g()
        ))),
    }
}

/// Closed-form startup values `(Φ₀, z'(0), α''(0))`:
/// `Φ₀ = (3n - 2q + 2)(g₁α₀² - f₁α₀) / (2q + n - 2)`,
/// `z'(0) = (n-1)/(n+1) Φ₀`, `α''(0) = 2 z'(0)`.
pub fn initial_curvature<T: Real>(spec: &ProblemSpec<T>, alpha0: T) -> Result<(T, T, T)> {
    if !(alpha0 > T::zero()) {
        return Err(Error::InvalidStart(format!("alpha0 = {alpha0} must be positive")));
    }
    let (f1, g1) = taylor_pair(spec)?;
    let n = T::from_usize_lossy(spec.n());
    let q = spec.q();
    let two = T::lit(2.0);
    let phi0 = (T::lit(3.0) * n - two * q + two) * (g1 * alpha0 * alpha0 - f1 * alpha0)
        / (two * q + n - two);
    let zp0 = (n - T::one()) / (n + T::one()) * phi0;
    Ok((phi0, zp0, two * zp0))
}

/// Converged startup fields on `[0, ε]`.
#[derive(Debug, Clone)]
pub struct LocalSolution<T> {
    spec: ProblemSpec<T>,
    epsilon: T,
    grid: Vec<T>,
    z: Vec<T>,
    zp: Vec<T>,
    alpha0: T,
    phi0: T,
    iterations: usize,
    converged: bool,
    max_residual: T,
    quad: Quadrature<T>,
}

/// Integrals of the last applied iterate, reused for dense evaluation.
#[derive(Debug, Clone)]
struct Quadrature<T> {
    /// `∫₀^{s_k} Φ`
    i0: Vec<T>,
    /// `∫₀^{s_k} (s/s_k)ⁿ Φ`
    jn: Vec<T>,
}

/// Serializable summary of a startup run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalSummary<T> {
    pub epsilon: T,
    pub alpha0: T,
    pub phi0: T,
    pub z_prime0: T,
    pub alpha_pp0: T,
    pub iterations: usize,
    pub converged: bool,
    pub max_residual: T,
    pub nodes: usize,
}

impl<T: Real> LocalSolution<T> {
    pub fn spec(&self) -> &ProblemSpec<T> {
        &self.spec
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Grid nodes, starting with `0` and ending with `ε`.
    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn z_values(&self) -> &[T] {
        &self.z
    }

    /// `v = √r z'` at the grid nodes.
    pub fn v_values(&self) -> Vec<T> {
        self.grid.iter().zip(&self.zp).map(|(&s, &zp)| s.sqrt() * zp).collect()
    }

    pub fn z_prime_values(&self) -> &[T] {
        &self.zp
    }

    pub fn alpha0(&self) -> T {
        self.alpha0
    }

    /// `Φ(0, 0, α₀)` from the limit formulas.
    pub fn phi0(&self) -> T {
        self.phi0
    }

    pub fn z_prime0(&self) -> T {
        self.zp[0]
    }

    /// `α''(0) = 2(n-1)/(n+1) Φ₀`.
    pub fn alpha_pp0(&self) -> T {
        let n = T::from_usize_lossy(self.spec.n());
        T::lit(2.0) * (n - T::one()) / (n + T::one()) * self.phi0
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Largest equation residual found at nodes in `[ε/10, ε]`.
    pub fn max_residual(&self) -> T {
        self.max_residual
    }

    pub fn summary(&self) -> LocalSummary<T> {
        LocalSummary {
            epsilon: self.epsilon,
            alpha0: self.alpha0,
            phi0: self.phi0,
            z_prime0: self.z_prime0(),
            alpha_pp0: self.alpha_pp0(),
            iterations: self.iterations,
            converged: self.converged,
            max_residual: self.max_residual,
            nodes: self.grid.len(),
        }
    }

    /// `(z(r), z'(r))` at any `r ∈ [0, 1.05 ε]`, obtained by applying the
    /// integral operators once more with a partial last cell.
    pub fn eval(&self, r: T) -> Result<(T, T)> {
        let limit = self.epsilon * T::lit(1.05);
        if !(r >= T::zero() && r <= limit) {
            return Err(Error::Range {
                lo: r.as_f64(),
                hi: r.as_f64(),
                grid_lo: 0.0,
                grid_hi: limit.as_f64(),
            });
        }
        if r == T::zero() {
            return Ok((self.alpha0, self.zp[0]));
        }
        let last = self.grid.len() - 1;
        let k = (self.grid.partition_point(|&s| s <= r) - 1).min(last);
        let sk = self.grid[k];
        let n = self.spec.n() as i32;
        let mut i0 = self.quad.i0[k];
        let mut jn = self.quad.jn[k] * (sk / r).powi(n);
        if r > sk {
            let cell = k.min(last - 1);
            let (c0, cn) = cell_integrals(
                &self.spec,
                &self.grid,
                &self.z,
                &self.zp,
                cell,
                sk,
                r,
                r,
            )?;
            i0 = i0 + c0;
            jn = jn + cn;
        }
        let nm1 = self.spec.n_minus_one();
        let nt = T::from_usize_lossy(self.spec.n());
        Ok((self.alpha0 + nm1 / nt * (i0 - jn), nm1 * jn / r))
    }

    /// `(r, α(r), α'(r))` reconstructed from the fields.
    pub fn state_at(&self, r: T) -> Result<StatePoint<T>> {
        let (z, zp) = self.eval(r)?;
        Ok(StatePoint::new(r, r * z, z + r * zp))
    }

    /// State at the last grid node, where continuation takes over.
    pub fn handoff(&self) -> StatePoint<T> {
        let k = self.grid.len() - 1;
        let r = self.grid[k];
        StatePoint::new(r, r * self.z[k], self.z[k] + r * self.zp[k])
    }

    /// `α''(0)` by a second-order one-sided difference of `α = r z` using
    /// `α(0) = 0`.
    pub fn fd_alpha_pp0(&self) -> Result<T> {
        let h = self.epsilon * T::lit(1e-3);
        let alpha = |r: T| -> Result<T> { Ok(r * self.eval(r)?.0) };
        let (a1, a2, a3) = (alpha(h)?, alpha(h + h)?, alpha(T::lit(3.0) * h)?);
        Ok((T::lit(4.0) * a2 - T::lit(5.0) * a1 - a3) / (h * h))
    }

    /// Equation residual at `r` with `α''` from a five-point central
    /// difference of the reconstructed `α`.
    pub fn fd_residual(&self, r: T) -> Result<T> {
        let h = r * T::lit(1e-2);
        let alpha = |x: T| -> Result<T> { Ok(x * self.eval(x)?.0) };
        let two = T::lit(2.0);
        let app = (-alpha(r + two * h)? + T::lit(16.0) * alpha(r + h)? - T::lit(30.0) * alpha(r)?
            + T::lit(16.0) * alpha(r - h)?
            - alpha(r - two * h)?)
            / (T::lit(12.0) * h * h);
        residual(&self.spec, &self.state_at(r)?, app)
    }
}

/// Runs the startup from the constant iterate `z = α₀, v = 0`.
pub fn picard_solve<T: Real>(
    spec: &ProblemSpec<T>,
    alpha0: T,
    epsilon_hint: T,
    opts: &PicardOptions<T>,
) -> Result<LocalSolution<T>> {
    picard_solve_from(spec, alpha0, epsilon_hint, opts, |_, _| (alpha0, T::zero()))
}

/// Runs the startup from a caller-supplied initial iterate `s ↦ (z, v)`,
/// given as a function of `(s, ε)`. The iterate must lie in
/// `|z - α₀| ≤ α₀/2, |v| ≤ 1`.
pub fn picard_solve_from<T: Real>(
    spec: &ProblemSpec<T>,
    alpha0: T,
    epsilon_hint: T,
    opts: &PicardOptions<T>,
    init: impl Fn(T, T) -> (T, T),
) -> Result<LocalSolution<T>> {
    if !(alpha0 > T::zero()) || !alpha0.is_finite() {
        return Err(Error::InvalidStart(format!("alpha0 = {alpha0} must be positive")));
    }
    if !(epsilon_hint > T::zero()) {
        return Err(Error::InvalidStart(format!(
            "epsilon hint {epsilon_hint} must be positive"
        )));
    }
    let _ = taylor_pair(spec)?;
    let phi0 = phi(spec, T::zero(), T::zero(), alpha0)?;

    let mut epsilon = epsilon_hint.min(alpha0 * alpha0 / T::lit(8.0));
    let mut total_iterations = 0;
    let mut last_change = T::infinity();
    let mut residual_failure: Option<Error> = None;

    while epsilon >= opts.eps_min {
        let grid = build_grid(epsilon, opts);
        let mut z = Vec::with_capacity(grid.len());
        let mut zp = Vec::with_capacity(grid.len());
        for &s in &grid {
            let (zi, vi) = init(s, epsilon);
            z.push(zi);
            zp.push(if s > T::zero() { vi / s.sqrt() } else { T::zero() });
        }
        if !in_ball(&grid, &z, &zp, alpha0) {
            return Err(Error::InvalidStart(
                "initial iterate lies outside |z - alpha0| <= alpha0/2, |v| <= 1".into(),
            ));
        }

        let mut outcome = None;
        for it in 1..=opts.max_iter {
            total_iterations += 1;
            let step = apply_operators(spec, alpha0, &grid, &z, &zp);
            let Ok((nz, nzp, quad)) = step else { break };
            if !in_ball(&grid, &nz, &nzp, alpha0) {
                break;
            }
            let change = grid
                .iter()
                .enumerate()
                .map(|(i, &s)| (nz[i] - z[i]).abs().max(s.sqrt() * (nzp[i] - zp[i]).abs()))
                .fold(T::zero(), T::max);
            last_change = change;
            z = nz;
            zp = nzp;
            if change < opts.tol_fix {
                outcome = Some((it, quad));
                break;
            }
        }

        if let Some((iterations, quad)) = outcome {
            let mut sol = LocalSolution {
                spec: *spec,
                epsilon,
                grid,
                z,
                zp,
                alpha0,
                phi0,
                iterations,
                converged: true,
                max_residual: T::zero(),
                quad,
            };
            let lo = epsilon / T::lit(10.0);
            let mut worst = T::zero();
            for &r in sol.grid.iter().filter(|&&r| r >= lo) {
                worst = worst.max(sol.fd_residual(r)?.abs());
            }
            sol.max_residual = worst;
            if worst < opts.tol_res {
                return Ok(sol);
            }
            residual_failure = Some(Error::ResidualTooLarge {
                r: epsilon.as_f64(),
                residual: worst.as_f64(),
                tol: opts.tol_res.as_f64(),
            });
        } else {
            residual_failure = None;
        }
        epsilon = epsilon / T::lit(2.0);
    }

    Err(residual_failure.unwrap_or(Error::NonContraction {
        epsilon: epsilon.as_f64(),
        iterations: total_iterations,
        last_change: last_change.as_f64(),
    }))
}

/// `0` followed by a geometric progression from `ε · span` to `ε`.
fn build_grid<T: Real>(epsilon: T, opts: &PicardOptions<T>) -> Vec<T> {
    let cells = (-opts.grid_span.ln() / opts.grid_ratio.ln())
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .max(3);
    let ratio = (-opts.grid_span.ln() / T::from_usize_lossy(cells)).exp();
    let mut grid = Vec::with_capacity(cells + 2);
    grid.push(T::zero());
    for j in 0..cells {
        grid.push(epsilon * opts.grid_span * ratio.powi(j as i32));
    }
    grid.push(epsilon);
    grid
}

fn in_ball<T: Real>(grid: &[T], z: &[T], zp: &[T], alpha0: T) -> bool {
    let half = alpha0 / T::lit(2.0);
    grid.iter().zip(z).zip(zp).all(|((&s, &zi), &zpi)| {
        zi.is_finite() && zpi.is_finite() && (zi - alpha0).abs() <= half && s.sqrt() * zpi.abs() <= T::one()
    })
}

/// Cubic Lagrange interpolation of both fields on the four-node stencil of
/// `cell`.
fn interpolate<T: Real>(grid: &[T], z: &[T], zp: &[T], cell: usize, x: T) -> (T, T) {
    let start = cell.saturating_sub(1).min(grid.len() - 4);
    let nodes = &grid[start..start + 4];
    let (mut zi, mut zpi) = (T::zero(), T::zero());
    for j in 0..4 {
        let mut l = T::one();
        for m in 0..4 {
            if m != j {
                l = l * (x - nodes[m]) / (nodes[j] - nodes[m]);
            }
        }
        zi = zi + l * z[start + j];
        zpi = zpi + l * zp[start + j];
    }
    (zi, zpi)
}

/// `(∫_a^b Φ, ∫_a^b (s/scale)ⁿ Φ)` with the fields interpolated on `cell`.
#[allow(clippy::too_many_arguments)]
fn cell_integrals<T: Real>(
    spec: &ProblemSpec<T>,
    grid: &[T],
    z: &[T],
    zp: &[T],
    cell: usize,
    a: T,
    b: T,
    scale: T,
) -> Result<(T, T)> {
    let half = (b - a) / T::lit(2.0);
    let mid = (a + b) / T::lit(2.0);
    let n = spec.n() as i32;
    let (mut c0, mut cn) = (T::zero(), T::zero());
    for (&x, &w) in GAUSS_NODES.iter().zip(&GAUSS_WEIGHTS) {
        let s = mid + half * T::lit(x);
        let (zs, zps) = interpolate(grid, z, zp, cell, s);
        let value = T::lit(w) * half * phi(spec, s, s.sqrt() * zps, zs)?;
        c0 = c0 + value;
        cn = cn + (s / scale).powi(n) * value;
    }
    Ok((c0, cn))
}

type Fields<T> = (Vec<T>, Vec<T>, Quadrature<T>);

/// One application of the integral operators.
fn apply_operators<T: Real>(
    spec: &ProblemSpec<T>,
    alpha0: T,
    grid: &[T],
    z: &[T],
    zp: &[T],
) -> Result<Fields<T>> {
    let len = grid.len();
    let n = spec.n() as i32;
    let nm1 = spec.n_minus_one();
    let nt = T::from_usize_lossy(spec.n());
    let mut i0 = vec![T::zero(); len];
    let mut jn = vec![T::zero(); len];
    let mut nz = vec![alpha0; len];
    let mut nzp = vec![T::zero(); len];
    nzp[0] = nm1 / (nt + T::one()) * phi(spec, T::zero(), T::zero(), alpha0)?;
    for k in 0..len - 1 {
        let (a, b) = (grid[k], grid[k + 1]);
        let (c0, cn) = cell_integrals(spec, grid, z, zp, k, a, b, b)?;
        i0[k + 1] = i0[k] + c0;
        jn[k + 1] = jn[k] * (a / b).powi(n) + cn;
        nz[k + 1] = alpha0 + nm1 / nt * (i0[k + 1] - jn[k + 1]);
        nzp[k + 1] = nm1 * jn[k + 1] / b;
    }
    Ok((nz, nzp, Quadrature { i0, jn }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::WarpProfile;
    use proptest::prelude::*;

    fn spec(n: usize, p: f64, f: WarpProfile<f64>, g: WarpProfile<f64>) -> ProblemSpec<f64> {
        ProblemSpec::new(n, p, f, g).unwrap()
    }

    fn perturbed(c: f64) -> WarpProfile<f64> {
        WarpProfile::perturbed(c).unwrap()
    }

    fn opts() -> PicardOptions<f64> {
        PicardOptions::default()
    }

    #[test]
    fn phi_vanishes_in_the_flat_case() {
        let e = WarpProfile::euclidean();
        for &z in &[0.1, 0.7, 3.0] {
            assert_eq!(phi(&spec(3, 4.0, e, e), 0.0, 0.0, z).unwrap(), 0.0);
        }
    }

    #[test]
    fn phi_limit_with_perturbed_source() {
        let s = spec(3, 4.0, perturbed(1.0), WarpProfile::euclidean());
        let at_zero = phi(&s, 0.0, 0.0, 1.0).unwrap();
        // -f₁ - A/(n-1) + (3g₁ - 2f₁) with A = -16/5.
        assert!((at_zero - (-7.0 / 5.0)).abs() < 1e-14);
        let near = phi(&s, 1e-6, 0.0, 1.0).unwrap();
        assert!((near - at_zero).abs() < 1e-4);
    }

    #[test]
    fn phi_rejects_nonpositive_z() {
        let e = WarpProfile::euclidean();
        assert!(phi(&spec(3, 4.0, e, e), 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn phi_needs_startup_admissible_warps() {
        let s = spec(3, 4.0, WarpProfile::power(2.0).unwrap(), WarpProfile::euclidean());
        assert!(matches!(phi(&s, 0.0, 0.0, 1.0), Err(Error::NotStartupAdmissible(_))));
    }

    #[test]
    fn phi_is_continuous_at_the_origin() {
        let warps = [
            WarpProfile::euclidean(),
            WarpProfile::hyperbolic(),
            perturbed(1.0),
            perturbed(-0.5),
            WarpProfile::exp_growth(2.0).unwrap(),
        ];
        for &f in &warps {
            for &g in &warps {
                for &(n, p) in &[(2, 4.0), (3, 3.0), (4, 2.5)] {
                    let s = spec(n, p, f, g);
                    for &z in &[0.3, 1.0, 2.0] {
                        for &v in &[-0.2, 0.0, 0.2] {
                            let a = phi(&s, 0.0, v, z).unwrap();
                            let b = phi(&s, 1e-8, v, z).unwrap();
                            assert!((a - b).abs() < 1e-4, "{f} {g} n={n} p={p} z={z} v={v}: {a} vs {b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn initial_curvature_vanishes_without_quadratic_terms() {
        for f in [WarpProfile::euclidean(), WarpProfile::hyperbolic()] {
            for &(n, p, a) in &[(2, 4.0, 0.5), (3, 3.0, 1.0), (5, 7.0, 2.0)] {
                assert_eq!(initial_curvature(&spec(n, p, f, f), a).unwrap(), (0.0, 0.0, 0.0));
            }
        }
    }

    #[test]
    fn initial_curvature_matches_the_limit_integrand() {
        for &f1 in &[0.0, 1.0, -0.5] {
            for &g1 in &[0.0, 1.0] {
                for &n in &[2, 3, 4] {
                    for &p in &[2.0, 3.0, 4.0] {
                        let s = spec(n, p, perturbed(f1), perturbed(g1));
                        for &a in &[0.5, 1.0, 1.7] {
                            let (phi0, zp0, app0) = initial_curvature(&s, a).unwrap();
                            let limit = phi(&s, 0.0, 0.0, a).unwrap();
                            assert!((phi0 - limit).abs() < 1e-13);
                            let nn = n as f64;
                            assert!((zp0 - (nn - 1.0) / (nn + 1.0) * phi0).abs() < 1e-15);
                            assert_eq!(app0, 2.0 * zp0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn initial_curvature_worked_values() {
        let s = spec(3, 4.0, perturbed(1.0), WarpProfile::euclidean());
        let (phi0, zp0, app0) = initial_curvature(&s, 1.0).unwrap();
        assert!((phi0 + 1.4).abs() < 1e-15);
        assert!((zp0 + 0.7).abs() < 1e-15);
        assert!((app0 + 1.4).abs() < 1e-15);

        let s = spec(2, 4.0, WarpProfile::euclidean(), perturbed(1.0));
        let (phi0, _, _) = initial_curvature(&s, 0.5).unwrap();
        assert!((phi0 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn harmonic_curvature_from_the_series() {
        // p = 2, n = 2, f = y, g = y + g₁y²: α = a r + c r² with c = g₁a².
        let s = spec(2, 2.0, WarpProfile::euclidean(), perturbed(0.8));
        let (_, _, app0) = initial_curvature(&s, 0.6).unwrap();
        assert!((app0 - 2.0 * 0.8 * 0.36).abs() < 1e-15);
    }

    #[test]
    fn flat_startup_is_exact_after_one_iteration() {
        let e = WarpProfile::euclidean();
        for &(n, p) in &[(2, 3.0), (3, 4.0), (5, 2.5)] {
            let sol = picard_solve(&spec(n, p, e, e), 0.7, 0.1, &opts()).unwrap();
            assert_eq!(sol.iterations(), 1);
            assert!(sol.z_values().iter().all(|&z| z == 0.7));
            assert!(sol.v_values().iter().all(|&v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn hyperbolic_identity_startup() {
        let h = WarpProfile::hyperbolic();
        let sol = picard_solve(&spec(3, 4.0, h, h), 1.0, 0.1, &opts()).unwrap();
        let eps = sol.epsilon();
        assert!(eps <= 0.125);
        let res = sol.fd_residual(eps / 2.0).unwrap();
        assert!(res.abs() < 1e-8, "residual {res}");
        for (&r, &z) in sol.grid().iter().zip(sol.z_values()) {
            assert!((r * z - r).abs() <= 10.0 * r.powi(3) + 1e-15);
        }
    }

    #[test]
    fn startup_matches_the_curvature_formula() {
        let s = spec(3, 4.0, perturbed(1.0), WarpProfile::euclidean());
        let sol = picard_solve(&s, 1.0, 0.1, &opts()).unwrap();
        let (_, zp0, app0) = initial_curvature(&s, 1.0).unwrap();
        assert!((sol.z_prime0() - zp0).abs() < 1e-6);
        let fd = sol.fd_alpha_pp0().unwrap();
        assert!((fd - app0).abs() < 1e-4 * app0.abs(), "fd {fd} formula {app0}");
        assert_eq!(sol.alpha_pp0(), 2.0 * 2.0 / 4.0 * sol.phi0());
    }

    #[test]
    fn startup_solution_is_unique() {
        let s = spec(3, 4.0, perturbed(1.0), perturbed(0.5));
        let a = picard_solve(&s, 1.0, 0.1, &opts()).unwrap();
        let b = picard_solve_from(&s, 1.0, 0.1, &opts(), |x, eps| {
            (1.0 + 0.3 * x / eps, 0.5 * (7.0 * x / eps).sin())
        })
        .unwrap();
        assert_eq!(a.epsilon(), b.epsilon());
        for i in 0..a.grid().len() {
            assert!((a.z_values()[i] - b.z_values()[i]).abs() < 1e-10);
            assert!((a.v_values()[i] - b.v_values()[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn startup_rejects_initial_iterates_outside_the_ball() {
        let h = WarpProfile::hyperbolic();
        let err = picard_solve_from(&spec(3, 4.0, h, h), 1.0, 0.1, &opts(), |_, _| (2.0, 0.0));
        assert!(matches!(err, Err(Error::InvalidStart(_))));
    }

    #[test]
    fn startup_rejects_power_sources() {
        let s = spec(3, 4.0, WarpProfile::power(2.0).unwrap(), WarpProfile::euclidean());
        assert!(matches!(
            picard_solve(&s, 1.0, 0.1, &opts()),
            Err(Error::NotStartupAdmissible(_))
        ));
    }

    #[test]
    fn startup_reports_non_contraction() {
        let h = WarpProfile::hyperbolic();
        let strict = PicardOptions {
            max_iter: 1,
            ..opts()
        };
        let err = picard_solve(&spec(3, 4.0, perturbed(1.0), h), 1.0, 0.1, &strict).unwrap_err();
        assert!(matches!(err, Error::NonContraction { .. }), "{err}");
    }

    #[test]
    fn dense_evaluation_reproduces_the_nodes() {
        let s = spec(3, 3.0, perturbed(-0.5), WarpProfile::hyperbolic());
        let sol = picard_solve(&s, 0.8, 0.1, &opts()).unwrap();
        for (i, &r) in sol.grid().iter().enumerate() {
            let (z, zp) = sol.eval(r).unwrap();
            assert!((z - sol.z_values()[i]).abs() < 1e-12);
            assert!((zp - sol.z_prime_values()[i]).abs() < 1e-10);
        }
        assert!(sol.eval(sol.epsilon() * 2.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn startup_is_positive_and_monotone(
            f1 in -0.8f64..1.2,
            g1 in -0.5f64..1.0,
            n in 2usize..5,
            p in 2.0f64..5.0,
            alpha0 in 0.3f64..2.0,
        ) {
            let s = spec(n, p, perturbed(f1), perturbed(g1));
            let sol = picard_solve(&s, alpha0, 0.1, &opts()).unwrap();
            prop_assert!(sol.max_residual() < 1e-7);
            for &r in sol.grid().iter().skip(1) {
                let st = sol.state_at(r).unwrap();
                prop_assert!(st.alpha > 0.0 && st.alpha_prime > 0.0);
            }
            prop_assert_eq!(sol.z_values()[0], alpha0);
            prop_assert_eq!(sol.v_values()[0], 0.0);
        }
    }
}
