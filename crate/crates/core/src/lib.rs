//! Forward invariance of intersections of control barrier function safe sets.
//!
//! Given barriers `h_i` with safe sets `C_i = {h_i ≤ 0}` and a polytopic input
//! set `𝒰`, the crate builds the pointwise feasible-input polytope `K(x)`,
//! measures its Chebyshev radius, selects inputs from the contracted set
//! `K_γ(x)`, simulates closed loops and checks the sufficient conditions for
//! invariance of `∩ C_i`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod barrier;
pub mod error;
pub mod feasible_map;
pub mod geometry;
pub mod plot;
pub mod policy;
pub mod sampling;
pub mod scenario;
pub mod simulator;
pub mod solver;

pub use analysis::{certify, CertificationReport};
pub use barrier::{AlphaFunction, Barrier, SystemDynamics};
pub use error::{Error, Result};
pub use feasible_map::{build_k, build_k_gamma, estimate_gamma, FeasibleMapResult, SafetySpec};
pub use geometry::{ChebyshevResult, Polytope};
pub use policy::{select_control, Nominal, Policy, Selection};
pub use scenario::Scenario;
pub use simulator::{simulate, verify_invariance, ExitReason, Integrator, RunReport, SimConfig, Trajectory};
pub use solver::{ObjectiveChoice, SolveOutcome, SolveStatus};
