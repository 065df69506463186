//! Polytopes in H-representation `{u : A u ≤ b}`.
//!
//! A polytope is a plain value; every operation here is a pure function of
//! its arguments. Rows with `‖A_i‖₂ = 0` are feasibility-only constraints:
//! they are redundant when `b_i ≥ 0` and make the set empty otherwise, and
//! they are never normalized.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sampling::unit_direction;
use crate::solver::{solve_lp, solve_qp, LinearProgram, QuadraticProgram, SolveStatus};

/// Rows with norm below this are treated as zero rows.
pub const ZERO_ROW: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevResult {
    pub feasible: bool,
    pub center: Option<DVector<f64>>,
    pub radius: f64,
}

impl ChebyshevResult {
    fn infeasible() -> Self {
        ChebyshevResult {
            feasible: false,
            center: None,
            radius: 0.0,
        }
    }
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "polytope needs at least one row and one column".into(),
            ));
        }
        if a.nrows() != b.len() {
            return Err(Error::dims("polytope right-hand side", a.nrows(), b.len()));
        }
        if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("polytope entries must be finite".into()));
        }
        Ok(Polytope { a, b })
    }

    /// Builds a polytope from row slices.
    pub fn from_rows(rows: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::dims("polytope row", m, bad.len()));
        }
        Polytope::new(
            DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]),
            DVector::from_column_slice(b),
        )
    }

    /// `{u : ‖u‖_∞ ≤ u_max}` as `A = I_m ⊗ [1; −1]`, `b = u_max·1`.
    pub fn box_input(m: usize, u_max: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("input dimension must be positive".into()));
        }
        if !(u_max > 0.0) || !u_max.is_finite() {
            return Err(Error::InvalidParameter(format!("u_max must be positive, got {u_max}")));
        }
        let mut a = DMatrix::zeros(2 * m, m);
        for j in 0..m {
            a[(2 * j, j)] = 1.0;
            a[(2 * j + 1, j)] = -1.0;
        }
        Ok(Polytope {
            a,
            b: DVector::from_element(2 * m, u_max),
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn row_norms(&self) -> DVector<f64> {
        DVector::from_fn(self.a.nrows(), |i, _| self.a.row(i).norm())
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn stack(&self, other: &Polytope) -> Result<Polytope> {
        if self.dim() != other.dim() {
            return Err(Error::dims("stacked polytope columns", self.dim(), other.dim()));
        }
        let (p1, p2, m) = (self.rows(), other.rows(), self.dim());
        let mut a = DMatrix::zeros(p1 + p2, m);
        a.view_mut((0, 0), (p1, m)).copy_from(&self.a);
        a.view_mut((p1, 0), (p2, m)).copy_from(&other.a);
        let b = DVector::from_iterator(p1 + p2, self.b.iter().chain(other.b.iter()).copied());
        Ok(Polytope { a, b })
    }

    /// Per-row slack `b − A u`.
    pub fn slacks(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.dim() {
            return Err(Error::dims("point", self.dim(), u.len()));
        }
        Ok(&self.b - &self.a * u)
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.slacks(u)?.iter().all(|&s| s >= -tol))
    }

    /// Smallest normalized facet slack `(b_i − A_i u)/‖A_i‖₂` over nonzero
    /// rows, i.e. the distance from `u` to the nearest facet hyperplane.
    pub fn facet_margin(&self, u: &DVector<f64>) -> Result<f64> {
        let s = self.slacks(u)?;
        let norms = self.row_norms();
        Ok((0..s.len())
            .filter(|&i| norms[i] > ZERO_ROW)
            .map(|i| s[i] / norms[i])
            .fold(f64::INFINITY, f64::min))
    }

    /// Largest inscribed Euclidean ball, via
    /// `max r  s.t.  A_i u + r‖A_i‖₂ ≤ b_i, r ≥ 0`.
    pub fn chebyshev(&self) -> Result<ChebyshevResult> {
        let m = self.dim();
        let norms = self.row_norms();
        let mut rows = Vec::with_capacity(self.rows() + 1);
        for i in 0..self.rows() {
            if norms[i] <= ZERO_ROW {
                if self.b[i] < 0.0 {
                    return Ok(ChebyshevResult::infeasible());
                }
                continue;
            }
            rows.push(i);
        }
        if rows.is_empty() {
            return Err(Error::UnboundedRadius);
        }
        let p = rows.len() + 1;
        let mut a = DMatrix::zeros(p, m + 1);
        let mut b = DVector::zeros(p);
        for (r, &i) in rows.iter().enumerate() {
            for j in 0..m {
                a[(r, j)] = self.a[(i, j)];
            }
            a[(r, m)] = norms[i];
            b[r] = self.b[i];
        }
        a[(p - 1, m)] = -1.0;
        let mut c = DVector::zeros(m + 1);
        c[m] = -1.0;
        let out = solve_lp(&LinearProgram::new(c, a, b)?);
        match out.status {
            SolveStatus::Optimal => {
                let z = out.point.expect("optimal LP has a point");
                Ok(ChebyshevResult {
                    feasible: true,
                    center: Some(z.rows(0, m).into_owned()),
                    radius: z[m].max(0.0),
                })
            }
            SolveStatus::Infeasible => Ok(ChebyshevResult::infeasible()),
            SolveStatus::Unbounded => Err(Error::UnboundedRadius),
            status => Err(Error::Solver { status, step: None }),
        }
    }

    /// Facet offset `b_i − γ‖A_i‖₂`. For a full-dimensional polytope this is
    /// the set of points at distance at least `γ` from the complement.
    pub fn erode(&self, gamma: f64) -> Result<Polytope> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        let b = &self.b - self.row_norms() * gamma;
        Ok(Polytope { a: self.a.clone(), b })
    }

    /// Euclidean projection of `y` onto the polytope.
    pub fn project_point(&self, y: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        if self.contains(y, 1e-9)? {
            return Ok((0.0, y.clone()));
        }
        let m = self.dim();
        let qp = QuadraticProgram::new(DMatrix::identity(m, m), -y, self.a.clone(), self.b.clone())?;
        let out = solve_qp(&qp);
        match out.status {
            SolveStatus::Optimal => {
                let u = out.point.expect("optimal QP has a point");
                Ok(((&u - y).norm(), u))
            }
            SolveStatus::Infeasible => Err(Error::EmptyPolytope),
            status => Err(Error::Solver { status, step: None }),
        }
    }

    /// An LP-basic maximizer of `⟨d, u⟩`.
    pub fn support_point(&self, d: &DVector<f64>) -> Result<DVector<f64>> {
        if d.len() != self.dim() {
            return Err(Error::dims("support direction", self.dim(), d.len()));
        }
        let out = solve_lp(&LinearProgram::new(-d, self.a.clone(), self.b.clone())?);
        match out.status {
            SolveStatus::Optimal => Ok(out.point.expect("optimal LP has a point")),
            SolveStatus::Infeasible => Err(Error::EmptyPolytope),
            SolveStatus::Unbounded => Err(Error::UnboundedDirection),
            status => Err(Error::Solver { status, step: None }),
        }
    }

    /// Sampled lower bound on `sup_{u ∈ self} d(u, other)`: the largest
    /// distance to `other` among support points of `self` in `n_dirs`
    /// seeded random directions.
    pub fn directed_gap(&self, other: &Polytope, n_dirs: usize, seed: u64) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::dims("directed gap operands", self.dim(), other.dim()));
        }
        if n_dirs == 0 {
            return Err(Error::InvalidParameter("n_dirs must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gap: f64 = 0.0;
        for _ in 0..n_dirs {
            let d = unit_direction(self.dim(), &mut rng);
            let u = self.support_point(&d)?;
            let (dist, _) = other.project_point(&u)?;
            gap = gap.max(dist);
        }
        Ok(gap)
    }
}
