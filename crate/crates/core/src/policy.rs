//! Control selection from the contracted feasible set `K_γ(x)`.
//!
//! Each policy is a pointwise rule `x ↦ u ∈ K_γ(x)`; none of them is required
//! to be continuous in `x`, and [`Policy::RotatingVertex`] is deliberately
//! discontinuous in time as well.

use nalgebra::{DMatrix, DVector};

use crate::barrier::SystemDynamics;
use crate::error::{Error, Result};
use crate::feasible_map::{build_k, FeasibleMapResult, SafetySpec};
use crate::solver::{
    solve_lp, solve_qp, solve_safety_program, LinearProgram, ObjectiveChoice, QuadraticProgram, SolveStatus,
};

/// Tolerance of the `u ∈ K_γ(x)` contract.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Nominal {
    Constant(DVector<f64>),
    /// `u_nom = gain · (reference − x)`.
    Feedback {
        gain: DMatrix<f64>,
        reference: DVector<f64>,
    },
}

impl Nominal {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Nominal::Constant(u) => u.clone(),
            Nominal::Feedback { gain, reference } => gain * (reference - x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    ChebyshevCenter,
    /// `argmin ½ Σ w_j (u_j − u_nom,j)²` over `K_γ(x)`.
    QpTracking {
        nominal: Nominal,
        weights: DVector<f64>,
    },
    /// Basic minimizer of `cᵀu` over `K_γ(x)`.
    LpVertex {
        cost: DVector<f64>,
    },
    /// `LpVertex` with cost `costs[(step / period) mod K]`.
    RotatingVertex {
        costs: Vec<DVector<f64>>,
        period: usize,
    },
    /// Solution of the lifted safety program, replaced by the Chebyshev
    /// center when it misses the γ margin.
    SafetyProgram {
        objective: ObjectiveChoice,
    },
}

/// Tags recorded when a policy does something other than its primary rule.
pub const EVENT_SAFETY_FALLBACK: &str = "safety_program_fallback";
pub const EVENT_SAFETY_INFEASIBLE: &str = "safety_program_infeasible";

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub u: DVector<f64>,
    pub event: Option<&'static str>,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::ChebyshevCenter => "chebyshev_center",
            Policy::QpTracking { .. } => "qp_tracking",
            Policy::LpVertex { .. } => "lp_vertex",
            Policy::RotatingVertex { .. } => "rotating_vertex",
            Policy::SafetyProgram { .. } => "safety_program",
        }
    }

    /// Checks dimensions against a specification with state dimension `n`,
    /// input dimension `m` and `nh` barriers.
    pub fn validate(&self, n: usize, m: usize, nh: usize) -> Result<()> {
        let check_len = |what: &'static str, v: &DVector<f64>, len: usize| {
            if v.len() != len {
                Err(Error::dims(what, len, v.len()))
            } else {
                Ok(())
            }
        };
        match self {
            Policy::ChebyshevCenter => Ok(()),
            Policy::QpTracking { nominal, weights } => {
                check_len("tracking weights", weights, m)?;
                if weights.iter().any(|w| !(*w > 0.0)) {
                    return Err(Error::InvalidParameter("tracking weights must be positive".into()));
                }
                match nominal {
                    Nominal::Constant(u) => check_len("nominal input", u, m),
                    Nominal::Feedback { gain, reference } => {
                        check_len("feedback reference", reference, n)?;
                        if gain.nrows() != m || gain.ncols() != n {
                            return Err(Error::dims("feedback gain", m * n, gain.nrows() * gain.ncols()));
                        }
                        Ok(())
                    }
                }
            }
            Policy::LpVertex { cost } => check_len("vertex cost", cost, m),
            Policy::RotatingVertex { costs, period } => {
                if *period == 0 {
                    return Err(Error::InvalidParameter("rotation period must be at least 1".into()));
                }
                if costs.len() < 2 {
                    return Err(Error::InvalidParameter("rotation needs at least two costs".into()));
                }
                for c in costs {
                    check_len("vertex cost", c, m)?;
                }
                for (i, a) in costs.iter().enumerate() {
                    if costs[i + 1..].iter().any(|b| a == b) {
                        return Err(Error::InvalidParameter("rotation costs must be distinct".into()));
                    }
                }
                Ok(())
            }
            Policy::SafetyProgram { objective } => match objective {
                ObjectiveChoice::Feasibility => Ok(()),
                ObjectiveChoice::LinearCost(c) => check_len("safety program cost", c, m + nh),
                ObjectiveChoice::Tracking { u_nom, weights } => {
                    check_len("nominal input", u_nom, m)?;
                    check_len("slack weights", weights, nh)
                }
            },
        }
    }
}

fn empty(x: &DVector<f64>, gamma: f64) -> Error {
    Error::EmptyFeasibleSet {
        state: x.iter().copied().collect(),
        gamma,
    }
}

/// Selects `u ∈ K_γ(x)` according to `policy`.
pub fn select_control(
    policy: &Policy,
    spec: &SafetySpec,
    sys: &SystemDynamics,
    x: &DVector<f64>,
    step_index: usize,
    gamma: f64,
) -> Result<Selection> {
    let fm = build_k(spec, sys, x)?;
    select_from_map(policy, &fm, spec, sys, x, step_index, gamma)
}

/// Same as [`select_control`] with `K(x)` already built.
///
/// The Chebyshev LP of `K_γ` is that of `K` with every radius shifted by
/// `γ`, so `K_γ(x) ≠ ∅ ⇔ R_C(K(x)) ≥ γ` and both share their centers.
pub fn select_from_map(
    policy: &Policy,
    fm: &FeasibleMapResult,
    spec: &SafetySpec,
    sys: &SystemDynamics,
    x: &DVector<f64>,
    step_index: usize,
    gamma: f64,
) -> Result<Selection> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be nonnegative, got {gamma}"
        )));
    }
    if !fm.cheb.feasible || fm.cheb.radius < gamma {
        return Err(empty(x, gamma));
    }
    let center = || Selection {
        u: fm.cheb.center.clone().expect("feasible Chebyshev result has a center"),
        event: None,
    };
    let k_gamma = fm.k.erode(gamma)?;

    let vertex = |cost: &DVector<f64>| -> Result<Selection> {
        let out = solve_lp(&LinearProgram::new(
            cost.clone(),
            k_gamma.a().clone(),
            k_gamma.b().clone(),
        )?);
        match out.status {
            SolveStatus::Optimal => Ok(Selection {
                u: out.point.expect("optimal LP has a point"),
                event: None,
            }),
            SolveStatus::Infeasible => Err(empty(x, gamma)),
            status => Err(Error::Solver { status, step: None }),
        }
    };

    match policy {
        Policy::ChebyshevCenter => Ok(center()),
        Policy::QpTracking { nominal, weights } => {
            let u_nom = nominal.eval(x);
            let qp = QuadraticProgram::new(
                DMatrix::from_diagonal(weights),
                -weights.component_mul(&u_nom),
                k_gamma.a().clone(),
                k_gamma.b().clone(),
            )?;
            let out = solve_qp(&qp);
            match out.status {
                SolveStatus::Optimal => Ok(Selection {
                    u: out.point.expect("optimal QP has a point"),
                    event: None,
                }),
                SolveStatus::Infeasible => Err(empty(x, gamma)),
                status => Err(Error::Solver { status, step: None }),
            }
        }
        Policy::LpVertex { cost } => vertex(cost),
        Policy::RotatingVertex { costs, period } => {
            let idx = (step_index / (*period).max(1)) % costs.len();
            vertex(&costs[idx])
        }
        Policy::SafetyProgram { objective } => {
            let r = solve_safety_program(spec, sys, x, objective)?;
            match r.v {
                Some(v) if r.status == SolveStatus::Optimal => {
                    if k_gamma.contains(&v, MEMBERSHIP_TOL)? {
                        Ok(Selection { u: v, event: None })
                    } else {
                        log::debug!("safety program input misses the gamma margin; using the Chebyshev center");
                        Ok(Selection {
                            event: Some(EVENT_SAFETY_FALLBACK),
                            ..center()
                        })
                    }
                }
                _ => Ok(Selection {
                    event: Some(EVENT_SAFETY_INFEASIBLE),
                    ..center()
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{AlphaFunction, Barrier};
    use crate::geometry::Polytope;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn scalar() -> (SafetySpec, SystemDynamics) {
        let spec = SafetySpec::new(
            vec![Barrier::disk(v(&[0.0]), 1.0).unwrap()],
            vec![AlphaFunction::linear(1.0).unwrap()],
            Polytope::box_input(1, 1.0).unwrap(),
        )
        .unwrap();
        (spec, SystemDynamics::single_integrator(1).unwrap())
    }

    #[test]
    fn center_and_vertices_on_interval() {
        let (spec, sys) = scalar();
        let x = v(&[0.0]);
        let u = select_control(&Policy::ChebyshevCenter, &spec, &sys, &x, 0, 0.25)
            .unwrap()
            .u;
        assert!(u[0].abs() < 1e-12);
        let lp = Policy::LpVertex { cost: v(&[1.0]) };
        assert!((select_control(&lp, &spec, &sys, &x, 0, 0.25).unwrap().u[0] + 0.75).abs() < 1e-12);

        let rot = Policy::RotatingVertex {
            costs: vec![v(&[1.0]), v(&[-1.0])],
            period: 1,
        };
        let u0 = select_control(&rot, &spec, &sys, &x, 0, 0.25).unwrap().u[0];
        let u1 = select_control(&rot, &spec, &sys, &x, 1, 0.25).unwrap().u[0];
        assert!((u0 + 0.75).abs() < 1e-12 && (u1 - 0.75).abs() < 1e-12);
        // jump equals the width of the contracted interval
        assert!(((u1 - u0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rotation_period() {
        let (spec, sys) = scalar();
        let x = v(&[0.0]);
        let rot = Policy::RotatingVertex {
            costs: vec![v(&[1.0]), v(&[-1.0])],
            period: 3,
        };
        let us: Vec<f64> = (0..7)
            .map(|k| select_control(&rot, &spec, &sys, &x, k, 0.0).unwrap().u[0])
            .collect();
        assert_eq!(us, vec![-1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn tracking_projects_nominal() {
        let (spec, sys) = scalar();
        let p = Policy::QpTracking {
            nominal: Nominal::Constant(v(&[5.0])),
            weights: v(&[1.0]),
        };
        // K_γ(1) = [−0.75, −0.25]
        let u = select_control(&p, &spec, &sys, &v(&[1.0]), 0, 0.25).unwrap().u;
        assert!((u[0] + 0.25).abs() < 1e-12);
        let fb = Policy::QpTracking {
            nominal: Nominal::Feedback {
                gain: DMatrix::from_element(1, 1, 0.5),
                reference: v(&[0.0]),
            },
            weights: v(&[2.0]),
        };
        let u = select_control(&fb, &spec, &sys, &v(&[0.4]), 0, 0.1).unwrap().u;
        assert!((u[0] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_contraction_is_reported() {
        let (spec, sys) = scalar();
        let err = select_control(&Policy::ChebyshevCenter, &spec, &sys, &v(&[1.0]), 0, 0.6).unwrap_err();
        assert!(matches!(err, Error::EmptyFeasibleSet { .. }));
    }

    #[test]
    fn safety_program_fallback_keeps_margin() {
        let (spec, sys) = scalar();
        let p = Policy::SafetyProgram {
            objective: ObjectiveChoice::Tracking {
                u_nom: v(&[1.0]),
                weights: v(&[1.0]),
            },
        };
        for (x, gamma) in [(0.9, 0.2), (0.0, 0.25), (-0.5, 0.1)] {
            let x = v(&[x]);
            let sel = select_control(&p, &spec, &sys, &x, 0, gamma).unwrap();
            let kg = build_k(&spec, &sys, &x).unwrap().k.erode(gamma).unwrap();
            assert!(kg.contains(&sel.u, MEMBERSHIP_TOL).unwrap());
        }
        // at x = 0.9 the program picks v ≈ 0.011, outside K_0.2 = [−0.8, −0.1]
        let sel = select_control(&p, &spec, &sys, &v(&[0.9]), 0, 0.2).unwrap();
        assert_eq!(sel.event, Some(EVENT_SAFETY_FALLBACK));
    }

    #[test]
    fn validation() {
        assert!(Policy::RotatingVertex {
            costs: vec![v(&[1.0])],
            period: 1
        }
        .validate(1, 1, 1)
        .is_err());
        assert!(Policy::RotatingVertex {
            costs: vec![v(&[1.0]), v(&[1.0])],
            period: 1
        }
        .validate(1, 1, 1)
        .is_err());
        assert!(Policy::RotatingVertex {
            costs: vec![v(&[1.0]), v(&[-1.0])],
            period: 0
        }
        .validate(1, 1, 1)
        .is_err());
        assert!(Policy::LpVertex { cost: v(&[1.0, 2.0]) }.validate(1, 1, 1).is_err());
        assert!(Policy::ChebyshevCenter.validate(1, 1, 1).is_ok());
    }
}
