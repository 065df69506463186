//! The lifted safety program over `z = (v, δ₁, …, δ_N)`:
//!
//! ```text
//! min C(z)  s.t.  A_u v ≤ b_u,
//!                 L_f h_i(x) + L_g h_i(x) v + δ_i h_i(x) ≤ 0,   δ_i ≥ 0.
//! ```
//!
//! `x` is a parameter, so every constraint is linear in `z`. The slacks are
//! capped at [`DELTA_MAX`] so the feasibility objective (a Chebyshev center)
//! works on a bounded set.

use nalgebra::{DMatrix, DVector};

use super::{solve_lp, solve_qp, LinearProgram, QuadraticProgram, SolveStatus};
use crate::barrier::{lie_derivatives, SystemDynamics};
use crate::error::{Error, Result};
use crate::feasible_map::SafetySpec;
use crate::geometry::Polytope;

pub const DELTA_MAX: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveChoice {
    /// Chebyshev center of the lifted feasible set.
    Feasibility,
    /// `min cᵀz` over the lifted variables.
    LinearCost(DVector<f64>),
    /// `min ½‖v − u_nom‖² + ½ Σ w_i δ_i²`.
    Tracking { u_nom: DVector<f64>, weights: DVector<f64> },
}

#[derive(Debug, Clone)]
pub struct SafetyProgramResult {
    pub status: SolveStatus,
    pub v: Option<DVector<f64>>,
    pub delta: Option<DVector<f64>>,
    /// Chebyshev radius of the lifted set; only computed for `Feasibility`.
    pub lifted_radius: Option<f64>,
}

impl SafetyProgramResult {
    fn failed(status: SolveStatus) -> Self {
        SafetyProgramResult {
            status,
            v: None,
            delta: None,
            lifted_radius: None,
        }
    }
}

/// Feasible set of the safety program in `(v, δ)` coordinates. Row order:
/// input rows, one safety row per barrier, then `−δ_i ≤ 0`, then
/// `δ_i ≤ DELTA_MAX`.
pub fn lifted_polytope(spec: &SafetySpec, sys: &SystemDynamics, x: &DVector<f64>) -> Result<Polytope> {
    spec.check_system(sys)?;
    sys.check_state(x)?;
    let input = spec.input_set();
    let (m, nh, p) = (spec.input_dim(), spec.len(), input.rows());
    let rows = p + 3 * nh;
    let mut a = DMatrix::zeros(rows, m + nh);
    let mut b = DVector::zeros(rows);
    a.view_mut((0, 0), (p, m)).copy_from(input.a());
    b.rows_mut(0, p).copy_from(input.b());
    for (i, h) in spec.barriers().iter().enumerate() {
        let (lf, lg) = lie_derivatives(sys, h, x)?;
        let r = p + i;
        a.view_mut((r, 0), (1, m)).copy_from(&lg.transpose());
        a[(r, m + i)] = h.eval_unchecked(x);
        b[r] = -lf;
        a[(p + nh + i, m + i)] = -1.0;
        a[(p + 2 * nh + i, m + i)] = 1.0;
        b[p + 2 * nh + i] = DELTA_MAX;
    }
    Polytope::new(a, b)
}

pub fn solve_safety_program(
    spec: &SafetySpec,
    sys: &SystemDynamics,
    x: &DVector<f64>,
    objective: &ObjectiveChoice,
) -> Result<SafetyProgramResult> {
    let lifted = lifted_polytope(spec, sys, x)?;
    let (m, nh) = (spec.input_dim(), spec.len());
    let dim = m + nh;
    let mut lifted_radius = None;

    let z = match objective {
        ObjectiveChoice::Feasibility => {
            let cheb = lifted.chebyshev()?;
            if !cheb.feasible {
                return Ok(SafetyProgramResult::failed(SolveStatus::Infeasible));
            }
            lifted_radius = Some(cheb.radius);
            cheb.center.expect("feasible Chebyshev result has a center")
        }
        ObjectiveChoice::LinearCost(c) => {
            if c.len() != dim {
                return Err(Error::dims("safety program cost", dim, c.len()));
            }
            let out = solve_lp(&LinearProgram::new(c.clone(), lifted.a().clone(), lifted.b().clone())?);
            match out.status {
                SolveStatus::Optimal => out.point.expect("optimal LP has a point"),
                status => return Ok(SafetyProgramResult::failed(status)),
            }
        }
        ObjectiveChoice::Tracking { u_nom, weights } => {
            if u_nom.len() != m {
                return Err(Error::dims("nominal input", m, u_nom.len()));
            }
            if weights.len() != nh {
                return Err(Error::dims("slack weights", nh, weights.len()));
            }
            if weights.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::InvalidParameter("slack weights must be nonnegative".into()));
            }
            let mut diag = DVector::from_element(dim, 1.0);
            diag.rows_mut(m, nh).copy_from(weights);
            let mut c = DVector::zeros(dim);
            c.rows_mut(0, m).copy_from(&(-u_nom));
            let qp = QuadraticProgram::new(DMatrix::from_diagonal(&diag), c, lifted.a().clone(), lifted.b().clone())?;
            let out = solve_qp(&qp);
            match out.status {
                SolveStatus::Optimal => out.point.expect("optimal QP has a point"),
                status => return Ok(SafetyProgramResult::failed(status)),
            }
        }
    };

    let v = z.rows(0, m).into_owned();
    let delta = z.rows(m, nh).map(|d| d.max(0.0));
    Ok(SafetyProgramResult {
        status: SolveStatus::Optimal,
        v: Some(v),
        delta: Some(delta),
        lifted_radius,
    })
}
