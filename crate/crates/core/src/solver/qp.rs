//! Primal active-set method for strictly convex QPs.

use nalgebra::{DMatrix, DVector};

use super::{kkt_residual, solve_lp, LinearProgram, SolveOutcome, SolveStatus};
use crate::error::{Error, Result};

const RIDGE: f64 = 1e-9;
const MIN_EIGENVALUE: f64 = 1e-10;
const DROP_TOL: f64 = 1e-10;

/// `min ½zᵀQz + cᵀz  s.t.  A z ≤ b` with `Q` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    q: DMatrix<f64>,
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    regularized: bool,
}

impl QuadraticProgram {
    /// Validates the data. A ridge of `1e-9·I` is added when the smallest
    /// eigenvalue of `Q` is below `1e-10`; an indefinite `Q` is rejected.
    pub fn new(q: DMatrix<f64>, c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = c.len();
        if n == 0 {
            return Err(Error::InvalidParameter("QP needs at least one variable".into()));
        }
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::dims("QP Hessian", n, q.nrows()));
        }
        if a.ncols() != n {
            return Err(Error::dims("QP constraint columns", n, a.ncols()));
        }
        if a.nrows() != b.len() {
            return Err(Error::dims("QP right-hand side", a.nrows(), b.len()));
        }
        let finite = q
            .iter()
            .chain(c.iter())
            .chain(a.iter())
            .chain(b.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("QP data must be finite".into()));
        }
        if (&q - q.transpose()).amax() > 1e-10 {
            return Err(Error::InvalidParameter("QP Hessian is not symmetric".into()));
        }
        let min_eig = q.clone().symmetric_eigenvalues().min();
        let mut q = q;
        let mut regularized = false;
        if min_eig < MIN_EIGENVALUE {
            if min_eig + RIDGE < MIN_EIGENVALUE {
                return Err(Error::InvalidParameter(format!(
                    "QP Hessian is not positive semidefinite (min eigenvalue {min_eig:e})"
                )));
            }
            for i in 0..n {
                q[(i, i)] += RIDGE;
            }
            regularized = true;
        }
        Ok(QuadraticProgram {
            q,
            c,
            a,
            b,
            regularized,
        })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn cost(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn regularized(&self) -> bool {
        self.regularized
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.q * z)) + self.c.dot(z)
    }
}

/// Solves the equality-constrained subproblem
/// `min ½pᵀQp + gᵀp  s.t.  A_W p = 0` and returns `(p, λ_W)`.
fn solve_eqp(
    q: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    working: &[usize],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = g.len();
    let k = working.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(q);
    for (r, &i) in working.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = a[(i, j)];
            kkt[(j, n + r)] = a[(i, j)];
        }
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-g));
    let sol = kkt.full_piv_lu().solve(&rhs)?;
    Some((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
}

/// Solves `qp` with a primal active-set method started from a basic
/// feasible point of the constraints (phase 1 via [`solve_lp`]).
pub fn solve_qp(qp: &QuadraticProgram) -> SolveOutcome {
    let n = qp.c.len();
    let p = qp.a.nrows();

    let mut z = if p == 0 {
        DVector::zeros(n)
    } else {
        let phase1 = LinearProgram::new(DVector::zeros(n), qp.a.clone(), qp.b.clone())
            .expect("validated QP data forms a valid LP");
        let out = solve_lp(&phase1);
        match out.status {
            SolveStatus::Optimal => out.point.expect("optimal LP has a point"),
            SolveStatus::IterationLimit => return SolveOutcome::failed(SolveStatus::IterationLimit, out.iterations),
            _ => return SolveOutcome::failed(SolveStatus::Infeasible, out.iterations),
        }
    };

    let max_changes = 100 * n.max(1) + p;
    let mut working: Vec<usize> = Vec::new();
    let mut changes = 0;
    // an unblocked full step lands on the subspace minimizer, so at most one
    // such step separates two working-set changes; rounding can break that
    let mut passes = 0;

    loop {
        passes += 1;
        if changes > max_changes || passes > 2 * max_changes + 2 {
            let mut out = SolveOutcome::failed(SolveStatus::IterationLimit, changes);
            out.regularized = qp.regularized;
            return out;
        }
        let g = &qp.q * &z + &qp.c;
        let Some((step, lambda_w)) = solve_eqp(&qp.q, &g, &qp.a, &working) else {
            // working rows became dependent; drop the newest
            working.pop();
            changes += 1;
            continue;
        };
        let scale = 1.0 + z.amax();
        if step.amax() <= 1e-11 * scale {
            let most_negative = lambda_w
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < -DROP_TOL)
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                .map(|(r, _)| r);
            match most_negative {
                Some(r) => {
                    working.remove(r);
                    changes += 1;
                }
                None => {
                    let mut y = DVector::zeros(p);
                    for (r, &i) in working.iter().enumerate() {
                        y[i] = lambda_w[r].max(0.0);
                    }
                    let kkt = kkt_residual(Some(&qp.q), &qp.c, &qp.a, &qp.b, &z, &y);
                    return SolveOutcome {
                        status: SolveStatus::Optimal,
                        objective: qp.objective(&z),
                        point: Some(z),
                        multipliers: Some(y),
                        kkt_residual: kkt,
                        iterations: changes,
                        regularized: qp.regularized,
                    };
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..p {
            if working.contains(&i) {
                continue;
            }
            let ap = qp.a.row(i).dot(&step.transpose());
            if ap > 1e-14 {
                let slack = (qp.b[i] - qp.a.row(i).dot(&z.transpose())).max(0.0);
                let ratio = slack / ap;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
        }
        z += alpha * step;
        if let Some(i) = blocking {
            working.push(i);
            changes += 1;
        }
    }
}
