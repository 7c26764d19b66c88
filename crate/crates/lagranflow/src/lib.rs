//! Desk-scale simulator and verification toolkit for a randomly kicked 2D
//! Navier–Stokes flow on the torus carrying a Lagrangian particle.
//!
//! The crate provides:
//!
//! - [`spectral`]: divergence-free Fourier fields, Sobolev norms, Leray
//!   projection and the exact Galerkin advection term;
//! - [`noise`]: the structured kick-noise model (tensor basis `ψ_l(t)e_j(x)`,
//!   compactly supported coordinate densities, sampling, support margins);
//! - [`dynamics`]: the time-1 solution map of the kicked system, the Markov
//!   chain it generates, the linearised flow and control Jacobians;
//! - [`control`]: executable steering constructions (exact particle
//!   transport, linearised steering, velocity damping, fixed-point exact
//!   steering);
//! - [`coupling`]: regularised right inverses, stabilising shifts, coupled
//!   trajectories and mixing-rate estimation;
//! - [`measures`]: particle ensembles, periodic density estimation, entropy
//!   production and stationarity/convergence diagnostics;
//! - [`oracle`]: exact large-deviations computations (pressure, Feynman–Kac
//!   eigen-triples, Donsker–Varadhan rate functions, fluctuation relations)
//!   on finite Markov chains;
//! - [`config`] and [`output`]: experiment configuration, reproducibility
//!   manifests and file schemas shared with the command-line runner.
//!
//! A narrative guide with runnable examples lives in `book/`; its code
//! blocks are compiled and run as doctests through the [`guide`] module.

pub mod dynamics;
pub mod noise;
pub mod spectral;
