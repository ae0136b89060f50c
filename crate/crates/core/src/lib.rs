//! Physical-layer secrecy optimization for a UAV-mounted transmit array,
//! comparing movable-antenna micro-mobility against trajectory macro-mobility.
//!
//! * [`geometry`] line-of-sight channel model and secrecy-rate metrics
//! * [`feasible`] constraint sets and projections
//! * [`pga`] analytic gradients, AdaGrad and projected gradient ascent
//! * [`annealing`] Metropolis acceptance with geometric cooling
//! * [`ma`] alternating optimization of element positions and beams
//! * [`sca`] successive convex approximation of the UAV trajectory
//! * [`experiments`] configuration, sweeps and result files
//!
//! All randomness goes through [`SolverRng`] (ChaCha8 seeded with
//! `seed_from_u64`), so a run is reproducible from its seed on any platform.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annealing;
pub mod error;
pub mod experiments;
pub mod feasible;
pub mod geometry;
mod linalg;
pub mod ma;
pub mod pga;
pub mod sca;

pub use error::{Error, Result};

/// Random generator used by every stochastic component.
pub type SolverRng = rand_chacha::ChaCha8Rng;

/// One outer iteration of an alternating-optimization run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective of the current (possibly restored) iterate.
    pub objective: f64,
    pub best_objective: f64,
    pub temperature: f64,
    pub accepted: bool,
}
