//! Barrier functions, class-K∞ gains and control-affine dynamics.
//!
//! Everything here comes from a small closed catalog with closed-form
//! gradients, so C^{1,1} regularity of every barrier and local Lipschitz
//! continuity of `f`, `g` and `α` hold by construction.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polytope;
use crate::sampling::unit_direction;
use crate::solver::{solve_lp, LinearProgram, SolveStatus};

/// `h(x) = (x − c)ᵀP(x − c) − r` with `P ≻ 0`, `r > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBarrier {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    level: f64,
    // √r · P^{-1/2}, maps the unit sphere onto the zero level set
    sphere_map: DMatrix<f64>,
}

/// `h(x) = aᵀx − β`. The sublevel set is a half-space and is not compact.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBarrier {
    normal: DVector<f64>,
    offset: f64,
}

impl QuadraticBarrier {
    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// Maps the unit sphere onto the zero level set, relative to the center.
    pub fn sphere_map(&self) -> &DMatrix<f64> {
        &self.sphere_map
    }
}

impl AffineBarrier {
    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Barrier {
    Quadratic(QuadraticBarrier),
    Affine(AffineBarrier),
}

impl Barrier {
    pub fn quadratic(center: DVector<f64>, shape: DMatrix<f64>, level: f64) -> Result<Self> {
        let n = center.len();
        if n == 0 {
            return Err(Error::InvalidParameter("barrier dimension must be positive".into()));
        }
        if shape.nrows() != n || shape.ncols() != n {
            return Err(Error::dims("barrier shape matrix", n, shape.nrows()));
        }
        if !center.iter().chain(shape.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("barrier data must be finite".into()));
        }
        if !(level > 0.0) || !level.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "barrier level must be positive, got {level}"
            )));
        }
        if (&shape - shape.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParameter("barrier shape matrix is not symmetric".into()));
        }
        let eig = shape.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidParameter(
                "barrier shape matrix is not positive definite".into(),
            ));
        }
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let sphere_map = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * level.sqrt();
        Ok(Barrier::Quadratic(QuadraticBarrier {
            center,
            shape,
            level,
            sphere_map,
        }))
    }

    /// Euclidean ball `‖x − c‖² ≤ radius²`.
    pub fn disk(center: DVector<f64>, radius: f64) -> Result<Self> {
        let n = center.len();
        Barrier::quadratic(center, DMatrix::identity(n, n), radius * radius)
    }

    /// Half-space barrier. Compactness of the safe set then becomes the
    /// caller's responsibility, which must be acknowledged explicitly.
    pub fn affine(normal: DVector<f64>, offset: f64, acknowledge_noncompact: bool) -> Result<Self> {
        if !acknowledge_noncompact {
            return Err(Error::InvalidParameter(
                "affine barriers have non-compact sublevel sets; pass acknowledge_noncompact".into(),
            ));
        }
        if normal.is_empty() {
            return Err(Error::InvalidParameter("barrier dimension must be positive".into()));
        }
        if !normal.iter().all(|v| v.is_finite()) || !offset.is_finite() {
            return Err(Error::InvalidParameter("barrier data must be finite".into()));
        }
        if !(normal.norm() > 0.0) {
            return Err(Error::InvalidParameter("affine barrier normal must be nonzero".into()));
        }
        Ok(Barrier::Affine(AffineBarrier { normal, offset }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Barrier::Quadratic(q) => q.center.len(),
            Barrier::Affine(a) => a.normal.len(),
        }
    }

    pub fn is_compact(&self) -> bool {
        matches!(self, Barrier::Quadratic(_))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Barrier::Quadratic(_) => "quadratic",
            Barrier::Affine(_) => "affine",
        }
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dims("barrier state", self.dim(), x.len()));
        }
        Ok(())
    }

    /// Negative inside, zero on the boundary, positive outside.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        self.check(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &DVector<f64>) -> f64 {
        match self {
            Barrier::Quadratic(q) => {
                let e = x - &q.center;
                e.dot(&(&q.shape * &e)) - q.level
            }
            Barrier::Affine(a) => a.normal.dot(x) - a.offset,
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(self.gradient_unchecked(x))
    }

    pub(crate) fn gradient_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Barrier::Quadratic(q) => &q.shape * (x - &q.center) * 2.0,
            Barrier::Affine(a) => a.normal.clone(),
        }
    }

    /// Axis-aligned bounding box of the sublevel set; `None` when unbounded.
    pub fn bounding_box(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        match self {
            Barrier::Quadratic(q) => {
                // half-width along e_j is √(r · (P⁻¹)_jj)
                let inv = q.shape.clone().try_inverse()?;
                let half = DVector::from_fn(q.center.len(), |j, _| (q.level * inv[(j, j)]).sqrt());
                Some((&q.center - &half, &q.center + &half))
            }
            Barrier::Affine(_) => None,
        }
    }

    /// The `2n` boundary points `c ± √r·P^{-1/2} v_j` on the principal axes
    /// of `P`. Empty for half-spaces.
    pub fn principal_boundary_points(&self) -> Vec<DVector<f64>> {
        match self {
            Barrier::Quadratic(q) => {
                let eig = q.shape.clone().symmetric_eigen();
                let mut pts = Vec::with_capacity(2 * q.center.len());
                for j in 0..q.center.len() {
                    let v = eig.eigenvectors.column(j).normalize();
                    for s in [1.0, -1.0] {
                        pts.push(&q.center + &q.sphere_map * (&v * s));
                    }
                }
                pts
            }
            Barrier::Affine(_) => Vec::new(),
        }
    }

    /// `count` seeded points on the zero level set. Ellipsoids use the exact
    /// affine image of uniformly random sphere directions; half-spaces
    /// project uniform samples of `bbox` onto the hyperplane.
    pub fn boundary_sample(
        &self,
        count: usize,
        seed: u64,
        bbox: Option<(&DVector<f64>, &DVector<f64>)>,
    ) -> Result<Vec<DVector<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Barrier::Quadratic(q) => Ok((0..count)
                .map(|_| {
                    let v = unit_direction(q.center.len(), &mut rng);
                    &q.center + &q.sphere_map * v
                })
                .collect()),
            Barrier::Affine(a) => {
                let (lo, hi) = bbox.ok_or(Error::UnsupportedBarrierKind(
                    "affine boundary sampling needs a bounding box",
                ))?;
                if lo.len() != a.normal.len() || hi.len() != a.normal.len() {
                    return Err(Error::dims("sampling box", a.normal.len(), lo.len()));
                }
                let nn = a.normal.norm_squared();
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    let y = uniform_in_box(lo, hi, &mut rng)?;
                    let r = a.normal.dot(&y) - a.offset;
                    out.push(y - &a.normal * (r / nn));
                }
                Ok(out)
            }
        }
    }
}

pub(crate) fn uniform_in_box(lo: &DVector<f64>, hi: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    let mut y = DVector::zeros(lo.len());
    for j in 0..lo.len() {
        if !(lo[j] <= hi[j]) {
            return Err(Error::InvalidParameter("sampling box has lo > hi".into()));
        }
        y[j] = if lo[j] == hi[j] {
            lo[j]
        } else {
            Uniform::new(lo[j], hi[j])
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .sample(rng)
        };
    }
    Ok(y)
}

/// Max componentwise `|analytic − central difference| / max(1, ‖analytic‖)`.
pub fn fd_gradient_check(h: &Barrier, x: &DVector<f64>, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let g = h.gradient(x)?;
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let fd = (h.eval_unchecked(&xp) - h.eval_unchecked(&xm)) / (2.0 * step);
        worst = worst.max((g[j] - fd).abs());
    }
    Ok(worst / g.norm().max(1.0))
}

/// Extended class-K∞ gain: `k·s` or `k·s³`, `k > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaFunction {
    Linear { k: f64 },
    Cubic { k: f64 },
}

impl AlphaFunction {
    pub fn linear(k: f64) -> Result<Self> {
        AlphaFunction::Linear { k }.validated()
    }

    pub fn cubic(k: f64) -> Result<Self> {
        AlphaFunction::Cubic { k }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let k = self.gain();
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha gain must be positive, got {k}")));
        }
        Ok(self)
    }

    pub fn gain(&self) -> f64 {
        match *self {
            AlphaFunction::Linear { k } | AlphaFunction::Cubic { k } => k,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            AlphaFunction::Linear { k } => k * s,
            AlphaFunction::Cubic { k } => k * s * s * s,
        }
    }
}

/// `ẋ = f(x) + g(x) u` with
/// `f(x) = F x + d + [xᵀQ_1x, …, xᵀQ_nx]` and `g(x) = G₀ + Σ_k x_k G_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDynamics {
    n: usize,
    m: usize,
    f_lin: DMatrix<f64>,
    f_const: DVector<f64>,
    f_quad: Vec<DMatrix<f64>>,
    g0: DMatrix<f64>,
    g_state: Vec<DMatrix<f64>>,
}

impl SystemDynamics {
    /// General polynomial form. `f_quad` and `g_state` are either empty or
    /// hold exactly `n` matrices.
    pub fn new(
        f_lin: DMatrix<f64>,
        f_const: DVector<f64>,
        f_quad: Vec<DMatrix<f64>>,
        g0: DMatrix<f64>,
        g_state: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = f_const.len();
        let m = g0.ncols();
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter(
                "state and input dimensions must be positive".into(),
            ));
        }
        if f_lin.nrows() != n || f_lin.ncols() != n {
            return Err(Error::dims("drift matrix F", n, f_lin.nrows()));
        }
        if g0.nrows() != n {
            return Err(Error::dims("input matrix G0 rows", n, g0.nrows()));
        }
        if !f_quad.is_empty() && f_quad.len() != n {
            return Err(Error::dims("quadratic drift terms", n, f_quad.len()));
        }
        for q in &f_quad {
            if q.nrows() != n || q.ncols() != n {
                return Err(Error::dims("quadratic drift term", n, q.nrows()));
            }
            if (q - q.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidParameter(
                    "quadratic drift terms must be symmetric".into(),
                ));
            }
        }
        if !g_state.is_empty() && g_state.len() != n {
            return Err(Error::dims("state-dependent input terms", n, g_state.len()));
        }
        for g in &g_state {
            if g.nrows() != n || g.ncols() != m {
                return Err(Error::dims("state-dependent input term", n * m, g.nrows() * g.ncols()));
            }
        }
        let finite = f_lin
            .iter()
            .chain(f_const.iter())
            .chain(g0.iter())
            .chain(f_quad.iter().flat_map(|q| q.iter()))
            .chain(g_state.iter().flat_map(|g| g.iter()))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("dynamics data must be finite".into()));
        }
        Ok(SystemDynamics {
            n,
            m,
            f_lin,
            f_const,
            f_quad,
            g0,
            g_state,
        })
    }

    /// `ẋ = F x + d + G u`.
    pub fn linear(f_lin: DMatrix<f64>, f_const: DVector<f64>, g: DMatrix<f64>) -> Result<Self> {
        SystemDynamics::new(f_lin, f_const, Vec::new(), g, Vec::new())
    }

    /// `ẋ = u` in `ℝⁿ`.
    pub fn single_integrator(n: usize) -> Result<Self> {
        SystemDynamics::linear(DMatrix::zeros(n, n), DVector::zeros(n), DMatrix::identity(n, n))
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut f = &self.f_lin * x + &self.f_const;
        for (i, q) in self.f_quad.iter().enumerate() {
            f[i] += x.dot(&(q * x));
        }
        f
    }

    pub fn input_map(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut g = self.g0.clone();
        for (k, gk) in self.g_state.iter().enumerate() {
            g += gk * x[k];
        }
        g
    }

    pub fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.drift(x) + self.input_map(x) * u
    }

    pub(crate) fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::dims("state", self.n, x.len()));
        }
        Ok(())
    }
}

/// `(L_f h(x), L_g h(x))` with `L_g h` returned as an `m`-vector.
pub fn lie_derivatives(sys: &SystemDynamics, h: &Barrier, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    sys.check_state(x)?;
    if h.dim() != sys.state_dim() {
        return Err(Error::dims("barrier dimension", sys.state_dim(), h.dim()));
    }
    let grad = h.gradient_unchecked(x);
    let lf = grad.dot(&sys.drift(x));
    let lg = sys.input_map(x).transpose() * grad;
    Ok((lf, lg))
}

/// `min_{u ∈ U} L_f h(x) + L_g h(x) u`. A strict CBF has this negative at
/// every boundary point.
pub fn strict_cbf_margin(sys: &SystemDynamics, h: &Barrier, input: &Polytope, x: &DVector<f64>) -> Result<f64> {
    let (lf, lg) = lie_derivatives(sys, h, x)?;
    if input.dim() != lg.len() {
        return Err(Error::dims("input polytope", lg.len(), input.dim()));
    }
    let out = solve_lp(&LinearProgram::new(lg, input.a().clone(), input.b().clone())?);
    match out.status {
        SolveStatus::Optimal => Ok(lf + out.objective),
        SolveStatus::Infeasible => Err(Error::EmptyPolytope),
        SolveStatus::Unbounded => Err(Error::UnboundedDirection),
        status => Err(Error::Solver { status, step: None }),
    }
}
