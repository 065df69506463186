//! Two-phase primal simplex on a dense tableau with Bland's rule.

use nalgebra::{DMatrix, DVector};

use super::{kkt_residual, SolveOutcome, SolveStatus};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-9;

/// `min cᵀz  s.t.  A z ≤ b`, `z` free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl LinearProgram {
    pub fn new(c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.ncols() != c.len() {
            return Err(Error::dims("LP cost", a.ncols(), c.len()));
        }
        if a.nrows() != b.len() {
            return Err(Error::dims("LP right-hand side", a.nrows(), b.len()));
        }
        if c.is_empty() {
            return Err(Error::InvalidParameter("LP needs at least one variable".into()));
        }
        let finite = c.iter().chain(a.iter()).chain(b.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("LP data must be finite".into()));
        }
        Ok(LinearProgram { c, a, b })
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
}

/// Column layout of the standard-form tableau built from `A z ≤ b`:
/// `[z⁺ (n) | z⁻ (n) | slack (p) | artificial (k)]`.
struct Tableau {
    rows: usize,
    cols: usize,
    // row-major, `cols + 1` entries per row, rhs last
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    first_artificial: usize,
    pivots: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.t[r * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let inv = 1.0 / self.at(pr, pc);
        for v in &mut self.t[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        let pivot_row: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for (dst, src) in self.t[r * w..(r + 1) * w].iter_mut().zip(&pivot_row) {
                    *dst -= f * src;
                }
                self.t[r * w + pc] = 0.0;
            }
        }
        let f = self.obj[pc];
        if f != 0.0 {
            for (dst, src) in self.obj.iter_mut().zip(&pivot_row) {
                *dst -= f * src;
            }
            self.obj[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Rebuilds the reduced-cost row for cost vector `cost` (length `cols`).
    fn price(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        self.obj = cost.to_vec();
        self.obj.push(0.0);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for j in 0..w {
                    self.obj[j] -= cb * self.t[r * w + j];
                }
            }
        }
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.cols + 1;
        self.t.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.rows -= 1;
    }

    /// Runs simplex iterations on the current reduced-cost row.
    /// Columns at or beyond `col_limit` never enter.
    fn iterate(&mut self, col_limit: usize, max_pivots: usize) -> SolveStatus {
        loop {
            if self.pivots >= max_pivots {
                return SolveStatus::IterationLimit;
            }
            // Bland: lowest-index improving column
            let Some(enter) = (0..col_limit).find(|&j| self.obj[j] < -COST_TOL) else {
                return SolveStatus::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, enter);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr]) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return SolveStatus::Unbounded,
                Some((r, _)) => self.pivot(r, enter),
            }
        }
    }
}

/// Solves `lp` with a two-phase simplex method. Returns a basic optimal
/// solution; ties are broken by Bland's rule, so for a fixed row order the
/// result is deterministic.
pub fn solve_lp(lp: &LinearProgram) -> SolveOutcome {
    let n = lp.c.len();
    let p = lp.a.nrows();
    let negated: Vec<bool> = (0..p).map(|i| lp.b[i] < 0.0).collect();
    let k = negated.iter().filter(|&&neg| neg).count();
    let first_artificial = 2 * n + p;
    let cols = first_artificial + k;
    let w = cols + 1;

    let mut t = vec![0.0; p * w];
    let mut basis = vec![0; p];
    let mut art = first_artificial;
    for i in 0..p {
        let s = if negated[i] { -1.0 } else { 1.0 };
        let row = &mut t[i * w..(i + 1) * w];
        for j in 0..n {
            row[j] = s * lp.a[(i, j)];
            row[n + j] = -s * lp.a[(i, j)];
        }
        row[2 * n + i] = s;
        row[cols] = s * lp.b[i];
        if negated[i] {
            row[art] = 1.0;
            basis[i] = art;
            art += 1;
        } else {
            basis[i] = 2 * n + i;
        }
    }

    let mut tab = Tableau {
        rows: p,
        cols,
        t,
        obj: Vec::new(),
        basis,
        first_artificial,
        pivots: 0,
    };
    let max_pivots = 10 * (p + cols).max(1);

    if k > 0 {
        let mut phase1_cost = vec![0.0; cols];
        for c in phase1_cost.iter_mut().skip(first_artificial) {
            *c = 1.0;
        }
        tab.price(&phase1_cost);
        match tab.iterate(cols, max_pivots) {
            SolveStatus::Optimal => {}
            SolveStatus::IterationLimit => return SolveOutcome::failed(SolveStatus::IterationLimit, tab.pivots),
            // phase 1 is bounded below by zero
            SolveStatus::Unbounded | SolveStatus::Infeasible => {
                return SolveOutcome::failed(SolveStatus::Infeasible, tab.pivots)
            }
        }
        let infeasibility = -tab.obj[cols];
        let scale = 1.0 + lp.b.amax();
        if infeasibility > PHASE1_TOL * scale {
            return SolveOutcome::failed(SolveStatus::Infeasible, tab.pivots);
        }
        // drive zero-level artificials out of the basis
        let mut r = 0;
        while r < tab.rows {
            if tab.basis[r] >= tab.first_artificial {
                let col = (0..tab.first_artificial)
                    .filter(|&j| tab.at(r, j).abs() > PIVOT_TOL)
                    .max_by(|&x, &y| tab.at(r, x).abs().total_cmp(&tab.at(r, y).abs()));
                match col {
                    Some(j) => tab.pivot(r, j),
                    None => {
                        tab.remove_row(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let mut cost = vec![0.0; cols];
    for j in 0..n {
        cost[j] = lp.c[j];
        cost[n + j] = -lp.c[j];
    }
    tab.price(&cost);
    let status = tab.iterate(first_artificial, max_pivots);
    if status != SolveStatus::Optimal {
        return SolveOutcome::failed(status, tab.pivots);
    }

    let mut split = vec![0.0; cols];
    for r in 0..tab.rows {
        split[tab.basis[r]] = tab.rhs(r);
    }
    let z = DVector::from_fn(n, |j, _| split[j] - split[n + j]);
    // reduced cost of slack i is the multiplier of row i
    let y = DVector::from_fn(p, |i, _| tab.obj[2 * n + i].max(0.0));
    let objective = lp.c.dot(&z);
    let kkt = kkt_residual(None, &lp.c, &lp.a, &lp.b, &z, &y);
    SolveOutcome {
        status: SolveStatus::Optimal,
        point: Some(z),
        objective,
        multipliers: Some(y),
        kkt_residual: kkt,
        iterations: tab.pivots,
        regularized: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(c: &[f64], rows: &[&[f64]], b: &[f64]) -> LinearProgram {
        let n = c.len();
        let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        LinearProgram::new(DVector::from_column_slice(c), a, DVector::from_column_slice(b)).unwrap()
    }

    #[test]
    fn chebyshev_of_unit_box() {
        // variables (u1, u2, r), maximize r
        let out = solve_lp(&lp(
            &[0.0, 0.0, -1.0],
            &[
                &[1.0, 0.0, 1.0],
                &[-1.0, 0.0, 1.0],
                &[0.0, 1.0, 1.0],
                &[0.0, -1.0, 1.0],
                &[0.0, 0.0, -1.0],
            ],
            &[1.0, 1.0, 1.0, 1.0, 0.0],
        ));
        assert!(out.is_optimal());
        let z = out.point.unwrap();
        assert!((z[2] - 1.0).abs() < 1e-12);
        assert!(out.kkt_residual < 1e-9);
    }

    #[test]
    fn minimum_over_interval() {
        let out = solve_lp(&lp(&[1.0], &[&[1.0], &[-1.0]], &[0.0, 1.0]));
        assert!(out.is_optimal());
        assert_eq!(out.point.unwrap()[0], -1.0);
        assert_eq!(out.objective, -1.0);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        // u >= 1, u <= 0
        let out = solve_lp(&lp(&[1.0], &[&[-1.0], &[1.0]], &[-1.0, 0.0]));
        assert_eq!(out.status, SolveStatus::Infeasible);
        assert!(out.point.is_none());
    }

    #[test]
    fn unbounded_direction_detected() {
        let out = solve_lp(&lp(&[-1.0, 0.0], &[&[0.0, 1.0], &[0.0, -1.0]], &[1.0, 1.0]));
        assert_eq!(out.status, SolveStatus::Unbounded);
    }

    #[test]
    fn zero_row_with_negative_rhs_is_infeasible() {
        let out = solve_lp(&lp(&[1.0], &[&[0.0], &[1.0], &[-1.0]], &[-0.5, 1.0, 1.0]));
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // many constraints through the optimum (0, 0)
        let out = solve_lp(&lp(
            &[1.0, 1.0],
            &[
                &[-1.0, 0.0],
                &[0.0, -1.0],
                &[-1.0, -1.0],
                &[-2.0, -1.0],
                &[-1.0, -2.0],
                &[1.0, 1.0],
            ],
            &[0.0, 0.0, 0.0, 0.0, 0.0, 4.0],
        ));
        assert!(out.is_optimal());
        assert!(out.objective.abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_rows_go_through_phase_one() {
        // 1 <= u <= 3, minimize -u
        let out = solve_lp(&lp(&[-1.0], &[&[-1.0], &[1.0]], &[-1.0, 3.0]));
        assert!(out.is_optimal());
        assert!((out.point.unwrap()[0] - 3.0).abs() < 1e-12);
        assert!(out.kkt_residual < 1e-9);
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let a = DMatrix::zeros(2, 2);
        assert!(LinearProgram::new(DVector::zeros(3), a, DVector::zeros(2)).is_err());
    }
}
