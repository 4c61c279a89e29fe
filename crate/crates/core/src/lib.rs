//! Simulation of unobservable false data injection (FDI) attacks against
//! PMU-based linear state estimation, and of the predictive filters that try
//! to catch them.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] parses network cases and PMU placements and builds the complex
//!   measurement model `w = Hx + e` together with the DC (PTDF) matrices.
//! * [`estimation`] runs weighted least squares state estimation and the
//!   chi-square bad data detector.
//! * [`lp`] and [`milp`] are a dense bounded revised simplex and a
//!   branch-and-bound driver on top of it.
//! * [`attack`] designs worst-case line-overflow attacks through the
//!   attacker-defender bilevel program and turns them into measurement
//!   perturbations.
//! * [`loads`] learns temporal load archetypes with a truncated SVD and
//!   generates spatially correlated bus load profiles.
//! * [`powerflow`] and [`measurement`] turn load profiles into 30 sample/s
//!   PMU streams.
//! * [`detection`] implements the TSQPA and five-sample predictive filters
//!   and residue-threshold detection.

pub mod attack;
pub mod detection;
pub mod estimation;
pub mod grid;
pub mod lp;
pub mod loads;
pub mod measurement;
pub mod milp;
pub mod powerflow;

mod linalg;

pub use num_complex::Complex64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
