//! The per-state feasible control set
//!
//! ```text
//! K(x) = { u : L_g h_i(x) u ≤ −α_i(h_i(x)) − L_f h_i(x),  i = 1..N_h,
//!              A_u u ≤ b_u }
//! ```
//!
//! its Chebyshev radius (which decides membership of `x` in Ω, the set of
//! states where `K(x)` has nonempty interior) and its γ-contraction.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::barrier::{lie_derivatives, AlphaFunction, Barrier, SystemDynamics};
use crate::error::{Error, Result};
use crate::geometry::{ChebyshevResult, Polytope};
use crate::sampling::{unit_direction, StateSampler};

/// Barriers `h_i`, their gains `α_i` and the input polytope `𝒰`.
#[derive(Debug, Clone)]
pub struct SafetySpec {
    barriers: Vec<Barrier>,
    alphas: Vec<AlphaFunction>,
    input_set: Polytope,
    sampling_box: Option<(DVector<f64>, DVector<f64>)>,
}

impl SafetySpec {
    pub fn new(barriers: Vec<Barrier>, alphas: Vec<AlphaFunction>, input_set: Polytope) -> Result<Self> {
        if barriers.is_empty() {
            return Err(Error::InvalidParameter("at least one barrier is required".into()));
        }
        if barriers.len() != alphas.len() {
            return Err(Error::dims("alpha functions", barriers.len(), alphas.len()));
        }
        let n = barriers[0].dim();
        if let Some(h) = barriers.iter().find(|h| h.dim() != n) {
            return Err(Error::dims("barrier dimension", n, h.dim()));
        }
        for a in &alphas {
            a.validated()?;
        }
        let cheb = input_set
            .chebyshev()
            .map_err(|_| Error::InvalidParameter("input set must be bounded".into()))?;
        if !cheb.feasible || !(cheb.radius > 0.0) {
            return Err(Error::InvalidParameter("input set must have nonempty interior".into()));
        }
        for j in 0..input_set.dim() {
            for s in [1.0, -1.0] {
                let mut d = DVector::zeros(input_set.dim());
                d[j] = s;
                input_set
                    .support_point(&d)
                    .map_err(|_| Error::InvalidParameter("input set must be bounded".into()))?;
            }
        }
        if barriers.iter().any(|h| !h.is_compact()) {
            log::warn!("specification contains affine barriers; compactness of the safe set is not guaranteed");
        }
        Ok(SafetySpec {
            barriers,
            alphas,
            input_set,
            sampling_box: None,
        })
    }

    /// Box used to sample states when the barriers alone do not bound the
    /// safe set (affine barriers).
    pub fn with_sampling_box(mut self, lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != self.state_dim() || hi.len() != self.state_dim() {
            return Err(Error::dims("sampling box", self.state_dim(), lo.len()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidParameter("sampling box has lo > hi".into()));
        }
        self.sampling_box = Some((lo, hi));
        Ok(self)
    }

    pub fn barriers(&self) -> &[Barrier] {
        &self.barriers
    }

    pub fn alphas(&self) -> &[AlphaFunction] {
        &self.alphas
    }

    pub fn input_set(&self) -> &Polytope {
        &self.input_set
    }

    pub fn sampling_box(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        self.sampling_box.as_ref().map(|(l, h)| (l, h))
    }

    pub fn len(&self) -> usize {
        self.barriers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.barriers.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.barriers[0].dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_set.dim()
    }

    /// Intersection of the bounding boxes of all compact barriers and the
    /// sampling box, if any. `None` when nothing bounds the safe set.
    pub fn bounding_box(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        let boxes = self
            .barriers
            .iter()
            .filter_map(Barrier::bounding_box)
            .chain(self.sampling_box.clone());
        boxes.reduce(|(l1, h1), (l2, h2)| (l1.sup(&l2), h1.inf(&h2)))
    }

    pub fn h_values(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.state_dim() {
            return Err(Error::dims("state", self.state_dim(), x.len()));
        }
        Ok(DVector::from_iterator(
            self.len(),
            self.barriers.iter().map(|h| h.eval_unchecked(x)),
        ))
    }

    pub(crate) fn check_system(&self, sys: &SystemDynamics) -> Result<()> {
        if sys.state_dim() != self.state_dim() {
            return Err(Error::dims("system state dimension", self.state_dim(), sys.state_dim()));
        }
        if sys.input_dim() != self.input_dim() {
            return Err(Error::dims("system input dimension", self.input_dim(), sys.input_dim()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FeasibleMapResult {
    /// Barrier rows in specification order, then the input rows.
    pub k: Polytope,
    pub cheb: ChebyshevResult,
    pub in_omega: bool,
}

/// `(A_S(x), b_S(x))` with row `i` equal to
/// `(L_g h_i(x), −α_i(h_i(x)) − L_f h_i(x))`.
pub fn barrier_rows(spec: &SafetySpec, sys: &SystemDynamics, x: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    spec.check_system(sys)?;
    sys.check_state(x)?;
    let (q, m) = (spec.len(), spec.input_dim());
    let mut a = DMatrix::zeros(q, m);
    let mut b = DVector::zeros(q);
    for (i, (h, alpha)) in spec.barriers.iter().zip(&spec.alphas).enumerate() {
        let (lf, lg) = lie_derivatives(sys, h, x)?;
        a.row_mut(i).copy_from(&lg.transpose());
        b[i] = -alpha.eval(h.eval_unchecked(x)) - lf;
    }
    Ok((a, b))
}

pub fn build_k(spec: &SafetySpec, sys: &SystemDynamics, x: &DVector<f64>) -> Result<FeasibleMapResult> {
    let (a, b) = barrier_rows(spec, sys, x)?;
    let k = Polytope::new(a, b)?.stack(&spec.input_set)?;
    // the input rows keep K bounded
    let cheb = k.chebyshev()?;
    let in_omega = cheb.feasible && cheb.radius > 0.0;
    Ok(FeasibleMapResult { k, cheb, in_omega })
}

/// `K_γ(x)`: every facet of `K(x)` moved inward by `γ`. May be empty.
pub fn build_k_gamma(spec: &SafetySpec, sys: &SystemDynamics, x: &DVector<f64>, gamma: f64) -> Result<Polytope> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    build_k(spec, sys, x)?.k.erode(gamma)
}

#[derive(Debug, Clone)]
pub struct GammaEstimate {
    pub gamma: f64,
    /// Smallest Chebyshev radius of `K(x)` over the samples.
    pub min_radius: f64,
    pub argmin: DVector<f64>,
    pub samples: usize,
}

/// `γ = ρ · min R_C(K(x))` over `count` sampled states. Every sample must
/// lie in Ω; the first one that does not is reported.
pub fn estimate_gamma(
    spec: &SafetySpec,
    sys: &SystemDynamics,
    sampler: &mut dyn StateSampler,
    rho: f64,
    count: usize,
) -> Result<GammaEstimate> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!("rho must lie in (0, 1), got {rho}")));
    }
    if count == 0 {
        return Err(Error::InvalidParameter("count must be positive".into()));
    }
    let mut min_radius = f64::INFINITY;
    let mut argmin = DVector::zeros(spec.state_dim());
    for _ in 0..count {
        let x = sampler.sample()?;
        let fm = build_k(spec, sys, &x)?;
        if !fm.in_omega {
            return Err(Error::outside_omega(&x));
        }
        if fm.cheb.radius < min_radius {
            min_radius = fm.cheb.radius;
            argmin = x;
        }
    }
    Ok(GammaEstimate {
        gamma: rho * min_radius,
        min_radius,
        argmin,
        samples: count,
    })
}

#[derive(Debug, Clone)]
pub struct LipschitzEstimate {
    /// Largest observed `gap(K_γ(x₂), K_γ(x₁)) / ‖x₁ − x₂‖`.
    pub value: f64,
    pub pairs_used: usize,
    /// Pairs dropped because the two states coincided.
    pub skipped: usize,
}

const GAP_DIRECTIONS: usize = 64;

/// Empirical lower estimate of the local Lipschitz constant of `K_γ` in the
/// ball of `radius` around `x`.
#[allow(clippy::too_many_arguments)]
pub fn lipschitz_estimate(
    spec: &SafetySpec,
    sys: &SystemDynamics,
    x: &DVector<f64>,
    radius: f64,
    n_pairs: usize,
    gamma: f64,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be nonnegative, got {gamma}"
        )));
    }
    spec.check_system(sys)?;
    sys.check_state(x)?;
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ball_point = |rng: &mut ChaCha8Rng| -> DVector<f64> {
        let d = unit_direction(n, rng);
        let t: f64 = rand::Rng::random(rng);
        x + d * (radius * t.powf(1.0 / n as f64))
    };
    let contracted = |y: &DVector<f64>| -> Result<Polytope> {
        let fm = build_k(spec, sys, y)?;
        if !fm.in_omega {
            return Err(Error::outside_omega(y));
        }
        if fm.cheb.radius < gamma {
            return Err(Error::EmptyFeasibleSet {
                state: y.iter().copied().collect(),
                gamma,
            });
        }
        fm.k.erode(gamma)
    };

    let mut value: f64 = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for _ in 0..n_pairs {
        let x1 = ball_point(&mut rng);
        let x2 = ball_point(&mut rng);
        let dist = (&x1 - &x2).norm();
        if dist < 1e-12 {
            skipped += 1;
            continue;
        }
        let k1 = contracted(&x1)?;
        let k2 = contracted(&x2)?;
        let gap = k2.directed_gap(&k1, GAP_DIRECTIONS, seed)?;
        value = value.max(gap / dist);
        used += 1;
    }
    Ok(LipschitzEstimate {
        value,
        pairs_used: used,
        skipped,
    })
}
