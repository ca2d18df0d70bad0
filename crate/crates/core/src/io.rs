//! Profile serialization: a CSV node table and a JSON summary document.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{IntegrationStats, SolutionProfile, TerminationEvent};
use crate::local::LocalSummary;
use crate::ode::ProblemSpec;

pub const PROFILE_HEADER: &str = "r,alpha,alpha_prime,theta";

/// CSV table with one node per row in round-trip exact scientific notation.
pub fn profile_csv(profile: &SolutionProfile<f64>) -> String {
    let mut out = String::with_capacity(80 * (profile.len() + 1));
    out.push_str(PROFILE_HEADER);
    out.push('\n');
    for i in 0..profile.len() {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            profile.r()[i],
            profile.alpha()[i],
            profile.alpha_prime()[i],
            profile.theta()[i]
        );
    }
    out
}

pub fn write_profile_csv(profile: &SolutionProfile<f64>, path: &Path) -> Result<()> {
    std::fs::write(path, profile_csv(profile))?;
    Ok(())
}

/// Raw columns of a node table, before any consistency checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileTable {
    pub r: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_prime: Vec<f64>,
    pub theta: Vec<f64>,
}

pub fn parse_profile_table(text: &str) -> Result<ProfileTable> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == PROFILE_HEADER => {}
        other => {
            return Err(Error::Profile(format!(
                "expected header `{PROFILE_HEADER}`, found `{}`",
                other.unwrap_or("")
            )))
        }
    }
    let mut table = ProfileTable::default();
    for (row, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(Error::Profile(format!("row {} has {} columns", row + 1, cols.len())));
        }
        let mut vals = [0.0; 4];
        for (v, c) in vals.iter_mut().zip(&cols) {
            *v = c
                .parse()
                .map_err(|_| Error::Profile(format!("row {}: `{c}` is not a number", row + 1)))?;
        }
        table.r.push(vals[0]);
        table.alpha.push(vals[1]);
        table.alpha_prime.push(vals[2]);
        table.theta.push(vals[3]);
    }
    Ok(table)
}

/// First row whose stored `theta` disagrees with the value recomputed from
/// the nodes by more than `1e-12` relative, as `(row index, r)`.
pub fn theta_mismatch(table: &ProfileTable, profile: &SolutionProfile<f64>) -> Option<(usize, f64)> {
    table
        .theta
        .iter()
        .zip(profile.theta())
        .position(|(&stored, &fresh)| {
            !((stored - fresh).abs() <= 1e-12 * fresh.abs().max(f64::MIN_POSITIVE))
        })
        .map(|i| (i, table.r[i]))
}

/// Parses a node table written by [`profile_csv`]. The `theta` column is
/// recomputed from the nodes and must agree with the stored value.
pub fn parse_profile_csv(
    spec: ProblemSpec<f64>,
    text: &str,
    termination: TerminationEvent<f64>,
) -> Result<SolutionProfile<f64>> {
    let table = parse_profile_table(text)?;
    let profile = SolutionProfile::from_nodes(
        spec,
        table.r.clone(),
        table.alpha.clone(),
        table.alpha_prime.clone(),
        termination,
    )?;
    if let Some((i, _)) = theta_mismatch(&table, &profile) {
        return Err(Error::Profile(format!(
            "row {}: theta {:e} disagrees with recomputed {:e}",
            i + 1,
            table.theta[i],
            profile.theta()[i]
        )));
    }
    Ok(profile)
}

pub fn read_profile_csv(
    spec: ProblemSpec<f64>,
    path: &Path,
    termination: TerminationEvent<f64>,
) -> Result<SolutionProfile<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Profile(format!("cannot read {}: {e}", path.display())))?;
    parse_profile_csv(spec, &text, termination)
}

/// JSON summary of a run: problem, startup data, termination and statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub spec: ProblemSpec<f64>,
    pub q: f64,
    pub handoff_r: f64,
    pub startup: Option<StartupDocument>,
    pub termination: TerminationEvent<f64>,
    pub stats: IntegrationStats<f64>,
    pub nodes: usize,
    pub r_end: f64,
    pub alpha_end: f64,
    pub alpha_prime_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartupDocument {
    pub epsilon: f64,
    pub alpha0: f64,
    pub phi0: f64,
    pub z_prime0: f64,
    pub alpha_pp0: f64,
    pub iterations: usize,
    pub max_residual: f64,
}

impl From<&LocalSummary<f64>> for StartupDocument {
    fn from(s: &LocalSummary<f64>) -> Self {
        Self {
            epsilon: s.epsilon,
            alpha0: s.alpha0,
            phi0: s.phi0,
            z_prime0: s.z_prime0,
            alpha_pp0: s.alpha_pp0,
            iterations: s.iterations,
            max_residual: s.max_residual,
        }
    }
}

impl SolutionDocument {
    pub fn new(profile: &SolutionProfile<f64>) -> Self {
        let last = profile.last();
        Self {
            spec: *profile.spec(),
            q: profile.spec().q(),
            handoff_r: profile.handoff_r(),
            startup: profile.local().map(StartupDocument::from),
            termination: profile.termination(),
            stats: profile.stats(),
            nodes: profile.len(),
            r_end: last.r,
            alpha_end: last.alpha,
            alpha_prime_end: last.alpha_prime,
        }
    }
}

pub fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
