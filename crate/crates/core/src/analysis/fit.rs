//! Line fits used by the classifiers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::SolutionProfile;

/// Ordinary least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the residuals.
    pub rms: f64,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - slope * xi - intercept).powi(2))
        .sum();
    Some(LineFit {
        slope,
        intercept,
        rms: (ss / nf).sqrt(),
    })
}

/// Median of pairwise slopes, subsampled to at most `max_points` evenly
/// spaced points.
pub fn theil_sen(x: &[f64], y: &[f64], max_points: usize) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let stride = n.div_ceil(max_points.max(2));
    let idx: Vec<usize> = (0..n).step_by(stride.max(1)).collect();
    let mut slopes = Vec::with_capacity(idx.len() * idx.len() / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let dx = x[j] - x[i];
            if dx > 0.0 {
                slopes.push((y[j] - y[i]) / dx);
            }
        }
    }
    if slopes.is_empty() {
        return None;
    }
    slopes.sort_by(|a, b| a.total_cmp(b));
    let m = slopes.len();
    Some(if m % 2 == 1 {
        slopes[m / 2]
    } else {
        0.5 * (slopes[m / 2 - 1] + slopes[m / 2])
    })
}

/// Power law `α' ≈ amplitude · r^exponent` fitted on a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub fit_residual: f64,
    pub nodes: usize,
}

pub const MIN_FIT_NODES: usize = 30;

/// Least-squares slope of `(ln r, ln α')` over the nodes in `[lo, hi]`.
pub fn fit_asymptotic_exponent(profile: &SolutionProfile<f64>, window: (f64, f64)) -> Result<ExponentFit> {
    let (lo, hi) = window;
    let (start, end) = (profile.index_at_or_after(lo), profile.index_at_or_after(hi));
    let end = if end < profile.len() && profile.r()[end] == hi { end + 1 } else { end };
    let nodes = end.saturating_sub(start);
    if nodes < MIN_FIT_NODES {
        return Err(Error::WindowTooShort {
            lo,
            hi,
            nodes,
            required: MIN_FIT_NODES,
        });
    }
    let slopes = &profile.alpha_prime()[start..end];
    if let Some(k) = slopes.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::HypothesisViolated(format!(
            "alpha' = {} <= 0 at r = {}",
            slopes[k],
            profile.r()[start + k]
        )));
    }
    let x: Vec<f64> = profile.r()[start..end].iter().map(|r| r.ln()).collect();
    let y: Vec<f64> = slopes.iter().map(|v| v.ln()).collect();
    let fit = least_squares(&x, &y)
        .ok_or_else(|| Error::HypothesisViolated("degenerate fit window".into()))?;
    Ok(ExponentFit {
        exponent: fit.slope,
        amplitude: fit.intercept.exp(),
        fit_residual: fit.rms,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::TerminationEvent;
    use crate::ode::ProblemSpec;
    use crate::warp::WarpProfile;
    use proptest::prelude::*;

    fn synthetic(exponent: f64, amplitude: f64) -> SolutionProfile<f64> {
        let spec =
            ProblemSpec::new(3, 4.0, WarpProfile::euclidean(), WarpProfile::euclidean()).unwrap();
        let r: Vec<f64> = (0..200).map(|i| 1.0 + i as f64).collect();
        let ap: Vec<f64> = r.iter().map(|&x| amplitude * x.powf(exponent)).collect();
        let alpha: Vec<f64> = r.iter().map(|&x| 1.0 + x).collect();
        SolutionProfile::from_nodes(spec, r, alpha, ap, TerminationEvent::ReachedRMax).unwrap()
    }

    #[test]
    fn exact_power_law() {
        let fit = fit_asymptotic_exponent(&synthetic(-4.0 / 3.0, 3.0), (50.0, 200.0)).unwrap();
        assert!((fit.exponent + 4.0 / 3.0).abs() < 1e-10);
        assert!((fit.amplitude - 3.0).abs() < 1e-9);
        assert!(fit.fit_residual < 1e-12);
        assert_eq!(fit.nodes, 151);
    }

    #[test]
    fn constant_slope_has_zero_exponent() {
        let fit = fit_asymptotic_exponent(&synthetic(0.0, 1.0), (10.0, 100.0)).unwrap();
        assert!(fit.exponent.abs() < 1e-12);
    }

    #[test]
    fn short_window_is_rejected() {
        let err = fit_asymptotic_exponent(&synthetic(-1.0, 1.0), (10.0, 20.0)).unwrap_err();
        assert!(matches!(err, Error::WindowTooShort { nodes: 11, .. }));
    }

    #[test]
    fn theil_sen_resists_outliers() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        y[10] = 1e6;
        y[40] = -1e6;
        assert!((theil_sen(&x, &y, 64).unwrap() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn recovers_exact_power_laws(exponent in -3.0f64..1.0, amplitude in 0.01f64..100.0) {
            let fit = fit_asymptotic_exponent(&synthetic(exponent, amplitude), (20.0, 200.0)).unwrap();
            prop_assert!((fit.exponent - exponent).abs() < 1e-10);
            prop_assert!((fit.amplitude / amplitude - 1.0).abs() < 1e-9);
        }
    }
}
