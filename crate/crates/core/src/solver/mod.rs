//! Dense solvers for the small programs that appear at every state: the
//! Chebyshev LP, support-point LPs, Euclidean projections and the lifted
//! safety program over `(v, δ)`.
//!
//! Both solvers take constraints in the inequality form `A z ≤ b` with free
//! variables. They are sized for a handful of variables and a few dozen rows;
//! nothing is sparse and nothing is warm-started.

mod lp;
mod qp;
mod safety;

pub use lp::{solve_lp, LinearProgram};
pub use qp::{solve_qp, QuadraticProgram};
pub use safety::{lifted_polytope, solve_safety_program, ObjectiveChoice, SafetyProgramResult, DELTA_MAX};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Minimizer; `None` unless `status == Optimal`.
    pub point: Option<DVector<f64>>,
    pub objective: f64,
    /// Multipliers `y ≥ 0` with `∇objective + Aᵀy = 0` at the returned point.
    pub multipliers: Option<DVector<f64>>,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Set when a ridge was added to make the Hessian strictly convex.
    pub regularized: bool,
}

impl SolveOutcome {
    pub(crate) fn failed(status: SolveStatus, iterations: usize) -> Self {
        SolveOutcome {
            status,
            point: None,
            objective: f64::NAN,
            multipliers: None,
            kkt_residual: f64::INFINITY,
            iterations,
            regularized: false,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Largest KKT violation at `(z, y)` for `min ½zᵀQz + cᵀz  s.t.  A z ≤ b`.
/// `q = None` means a linear objective.
pub fn kkt_residual(
    q: Option<&DMatrix<f64>>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
) -> f64 {
    let mut grad = c.clone();
    if let Some(q) = q {
        grad += q * z;
    }
    let stationarity = (grad + a.transpose() * y).amax();
    let slack = b - a * z;
    let mut worst = stationarity;
    for i in 0..slack.len() {
        worst = worst.max(-slack[i]).max(-y[i]).max((y[i] * slack[i]).abs());
    }
    worst
}
