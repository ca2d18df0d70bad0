//! Numerical solver and asymptotic classifier for rotationally symmetric
//! p-harmonic maps between model manifolds `M(f) → N(g)`.
//!
//! The radial profile `α` of such a map solves a quasilinear second order
//! equation that is singular at `r = 0`. [`local`] builds the solution near
//! the origin from a fixed-point formulation, [`integrator`] continues it to
//! large radii, and [`analysis`] classifies the asymptotic behaviour.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod integrator;
pub mod io;
pub mod local;
pub mod ode;
pub mod scalar;
pub mod warp;

pub use error::{Error, Result};
pub use integrator::{
    integrate, integrate_with, solve, solve_from, solve_with, IntegrationStats, IntegratorOptions,
    SolutionProfile, SolveOptions, TerminationEvent,
};
pub use analysis::{classify_regime, predict_regime, Regime, RegimeReport};
pub use local::{initial_curvature, phi, picard_solve, picard_solve_from, LocalSolution, PicardOptions};
pub use ode::{energy_density, p_energy, residual, second_derivative, ProblemSpec, StatePoint};
pub use scalar::Real;
pub use warp::{WarpKind, WarpProfile};

pub type Warp = WarpProfile<f64>;
pub type Problem = ProblemSpec<f64>;
pub type State = StatePoint<f64>;
pub type Profile = SolutionProfile<f64>;
pub type Local = LocalSolution<f64>;
