//! Seeded samplers. Every sampler owns a `ChaCha8Rng` seeded from a `u64`,
//! so identical seeds reproduce identical sequences on every platform.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::barrier::{uniform_in_box, SystemDynamics};
use crate::error::{Error, Result};
use crate::feasible_map::{build_k, SafetySpec};

/// Acceptance floor for rejection sampling, checked once enough attempts
/// have been made for the rate to be meaningful.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
const MIN_ATTEMPTS_FOR_RATE: usize = 20_000;

/// Uniformly distributed direction on the unit sphere in `ℝⁿ`.
pub fn unit_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

pub trait StateSampler {
    fn sample(&mut self) -> Result<DVector<f64>>;
}

/// Uniform samples in an axis-aligned box.
pub struct BoxSampler {
    lo: DVector<f64>,
    hi: DVector<f64>,
    rng: ChaCha8Rng,
}

impl BoxSampler {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>, seed: u64) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dims("sampling box", lo.len(), hi.len()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidParameter("sampling box has lo > hi".into()));
        }
        Ok(BoxSampler {
            lo,
            hi,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl StateSampler for BoxSampler {
    fn sample(&mut self) -> Result<DVector<f64>> {
        uniform_in_box(&self.lo, &self.hi, &mut self.rng)
    }
}

/// Rejection sampler for the intersection of safe sets, drawing from the
/// bounding box of the specification.
pub struct SafeSetSampler<'a> {
    spec: &'a SafetySpec,
    omega: Option<&'a SystemDynamics>,
    interior: bool,
    lo: DVector<f64>,
    hi: DVector<f64>,
    rng: ChaCha8Rng,
    attempts: usize,
    accepted: usize,
}

impl<'a> SafeSetSampler<'a> {
    /// Samples with `h_i(x) ≤ 0` for every barrier.
    pub fn new(spec: &'a SafetySpec, seed: u64) -> Result<Self> {
        let (lo, hi) = spec.bounding_box().ok_or_else(|| {
            Error::InvalidParameter("safe set has no bounding box; add a compact barrier or a sampling box".into())
        })?;
        Ok(SafeSetSampler {
            spec,
            omega: None,
            interior: false,
            lo,
            hi,
            rng: ChaCha8Rng::seed_from_u64(seed),
            attempts: 0,
            accepted: 0,
        })
    }

    /// Require `h_i(x) < 0` strictly.
    pub fn interior(mut self) -> Self {
        self.interior = true;
        self
    }

    /// Additionally require that `K(x)` has nonempty interior.
    pub fn within_omega(mut self, sys: &'a SystemDynamics) -> Self {
        self.omega = Some(sys);
        self
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            1.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }

    pub fn attempts(&self) -> usize {
        self.attempts
    }

    fn accepts(&self, x: &DVector<f64>) -> Result<bool> {
        for h in self.spec.barriers() {
            let v = h.eval_unchecked(x);
            if v > 0.0 || (self.interior && v >= 0.0) {
                return Ok(false);
            }
        }
        match self.omega {
            Some(sys) => Ok(build_k(self.spec, sys, x)?.in_omega),
            None => Ok(true),
        }
    }
}

impl StateSampler for SafeSetSampler<'_> {
    fn sample(&mut self) -> Result<DVector<f64>> {
        loop {
            let x = uniform_in_box(&self.lo, &self.hi, &mut self.rng)?;
            self.attempts += 1;
            if self.accepts(&x)? {
                self.accepted += 1;
                return Ok(x);
            }
            if self.attempts >= MIN_ATTEMPTS_FOR_RATE && self.acceptance_rate() < MIN_ACCEPTANCE {
                return Err(Error::LowAcceptance {
                    rate: self.acceptance_rate(),
                });
            }
        }
    }
}
