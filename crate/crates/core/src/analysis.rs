//! Certification of the hypotheses under which `∩ C_i` is invariant: strict
//! CBF margins on each boundary, transversality where two boundaries meet,
//! and feasibility of the safety program over the safe set.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barrier::{strict_cbf_margin, uniform_in_box, SystemDynamics};
use crate::error::{Error, Result};
use crate::feasible_map::{build_k, SafetySpec};
use crate::sampling::{unit_direction, SafeSetSampler, StateSampler};
use crate::solver::{solve_safety_program, ObjectiveChoice, SolveStatus};

/// Certified specifications need every strict-CBF margin below `−MARGIN_FLOOR`.
pub const MARGIN_FLOOR: f64 = 1e-9;
pub const DEFAULT_ANGLE_TOL: f64 = 1e-6;
const GRADIENT_FLOOR: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;
const DEDUP_DIST: f64 = 1e-6;
const NEWTON_ITERS: usize = 200;
/// `|h_i(x)| ≤ CONE_TOL` marks `x` as lying on `∂S_i` for the cone oracle.
pub const CONE_TOL: f64 = 1e-8;
/// Gauss–Newton starts per barrier pair during certification.
pub const INTERSECTION_STARTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveIndexSet {
    pub indices: Vec<usize>,
    pub tol: f64,
}

/// Barriers whose boundary passes within `tol` of `x` and meets at least one
/// other such boundary there.
pub fn active_set(spec: &SafetySpec, x: &DVector<f64>, tol: f64) -> Result<ActiveIndexSet> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be nonnegative, got {tol}")));
    }
    let near: Vec<usize> = spec
        .h_values(x)?
        .iter()
        .enumerate()
        .filter(|(_, h)| h.abs() <= tol)
        .map(|(i, _)| i)
        .collect();
    let indices = if near.len() >= 2 { near } else { Vec::new() };
    Ok(ActiveIndexSet { indices, tol })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub point: Vec<f64>,
    pub pair: (usize, usize),
    /// Cosine of the angle between the two gradients; 0 when degenerate.
    pub cos_angle: f64,
    pub pass: bool,
    pub degenerate: bool,
}

/// Normal cones of sublevel boundaries are the rays spanned by the
/// gradients, so transversality fails exactly when the gradients are
/// anti-parallel.
pub fn pairwise_transversality(
    spec: &SafetySpec,
    x: &DVector<f64>,
    i: usize,
    j: usize,
    angle_tol: f64,
) -> Result<TransversalityReport> {
    check_pair(spec, i, j)?;
    if !(angle_tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "angle_tol must be positive, got {angle_tol}"
        )));
    }
    let h = spec.h_values(x)?;
    if h[i].abs() > 1e-6 || h[j].abs() > 1e-6 {
        log::warn!(
            "transversality checked away from the shared boundary (h{} = {:e}, h{} = {:e})",
            i + 1,
            h[i],
            j + 1,
            h[j]
        );
    }
    let gi = spec.barriers()[i].gradient_unchecked(x);
    let gj = spec.barriers()[j].gradient_unchecked(x);
    for (idx, g) in [(i, &gi), (j, &gj)] {
        if g.norm() < GRADIENT_FLOOR {
            return Err(Error::DegenerateGradient { barrier: idx });
        }
    }
    let cos_angle = (gi.dot(&gj) / (gi.norm() * gj.norm())).clamp(-1.0, 1.0);
    Ok(TransversalityReport {
        point: x.iter().copied().collect(),
        pair: (i, j),
        cos_angle,
        pass: cos_angle > -1.0 + angle_tol,
        degenerate: false,
    })
}

fn check_pair(spec: &SafetySpec, i: usize, j: usize) -> Result<()> {
    if i == j {
        return Err(Error::PreconditionViolated(
            "transversality needs two distinct barriers".into(),
        ));
    }
    if i >= spec.len() || j >= spec.len() {
        return Err(Error::InvalidParameter(format!(
            "barrier index out of range ({} barriers)",
            spec.len()
        )));
    }
    Ok(())
}

fn pair_box(spec: &SafetySpec, i: usize, j: usize) -> Result<Option<(DVector<f64>, DVector<f64>)>> {
    let boxes = [spec.barriers()[i].bounding_box(), spec.barriers()[j].bounding_box()]
        .into_iter()
        .flatten()
        .chain(spec.sampling_box().map(|(l, h)| (l.clone(), h.clone())));
    let Some((lo, hi)) = boxes.reduce(|(l1, h1), (l2, h2)| (l1.sup(&l2), h1.inf(&h2))) else {
        return Err(Error::UnsupportedBarrierKind(
            "intersection sampling of two half-spaces needs a sampling box",
        ));
    };
    if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
        return Ok(None);
    }
    Ok(Some((lo, hi)))
}

/// Points of `∂S_i ∩ ∂S_j` found by Gauss–Newton on `(h_i, h_j)` from
/// `count` seeded starts; deduplicated and sorted lexicographically.
pub fn boundary_intersection_sample(
    spec: &SafetySpec,
    i: usize,
    j: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    check_pair(spec, i, j)?;
    let Some((lo, hi)) = pair_box(spec, i, j)? else {
        return Ok(Vec::new());
    };
    let (hi_b, hj_b) = (&spec.barriers()[i], &spec.barriers()[j]);
    let n = spec.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: Vec<DVector<f64>> = Vec::new();

    for _ in 0..count {
        let mut x = uniform_in_box(&lo, &hi, &mut rng)?;
        for _ in 0..NEWTON_ITERS {
            let r = DVector::from_vec(vec![hi_b.eval_unchecked(&x), hj_b.eval_unchecked(&x)]);
            if r.amax() <= RESIDUAL_TOL {
                break;
            }
            let mut jac = DMatrix::zeros(2, n);
            jac.row_mut(0).copy_from(&hi_b.gradient_unchecked(&x).transpose());
            jac.row_mut(1).copy_from(&hj_b.gradient_unchecked(&x).transpose());
            let Ok(pinv) = jac.pseudo_inverse(1e-14) else { break };
            x -= pinv * r;
            if x.iter().any(|v| !v.is_finite()) {
                break;
            }
        }
        let converged = x.iter().all(|v| v.is_finite())
            && hi_b.eval_unchecked(&x).abs() <= RESIDUAL_TOL
            && hj_b.eval_unchecked(&x).abs() <= RESIDUAL_TOL;
        if converged && found.iter().all(|p| (p - &x).norm() > DEDUP_DIST) {
            found.push(x);
        }
    }
    found.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(found)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierMargin {
    pub barrier: usize,
    /// Largest `min_{u∈𝒰} L_f h + L_g h·u` over the boundary samples.
    pub worst_margin: f64,
    pub argworst: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub passed: usize,
    pub total: usize,
    pub first_failure: Option<Vec<f64>>,
    /// Set when the safe set could not be sampled at all.
    pub sampler_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub strict_cbf: Vec<BarrierMargin>,
    pub transversality: Vec<TransversalityReport>,
    pub feasibility_sweep: SweepReport,
    /// Smallest singular value of the stacked unit gradients at the
    /// intersection points with at least two active barriers. Diagnostic
    /// only; it does not affect `certified`.
    pub min_singular_value: Option<f64>,
    pub certified: bool,
}

impl CertificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable reasons the specification is not certified.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for m in &self.strict_cbf {
            if !(m.worst_margin < -MARGIN_FLOOR) {
                out.push(format!(
                    "barrier {} is not a strict CBF: boundary margin {:e} at {:?}",
                    m.barrier + 1,
                    m.worst_margin,
                    m.argworst
                ));
            }
        }
        for t in self.transversality.iter().filter(|t| !t.pass) {
            let why = if t.degenerate {
                "degenerate gradient"
            } else {
                "anti-parallel gradients"
            };
            out.push(format!(
                "transversality fails for barriers {} and {} at {:?} ({why}, cos = {})",
                t.pair.0 + 1,
                t.pair.1 + 1,
                t.point,
                t.cos_angle
            ));
        }
        let s = &self.feasibility_sweep;
        if let Some(e) = &s.sampler_error {
            out.push(format!("feasibility sweep could not sample the safe set: {e}"));
        } else if s.passed != s.total {
            out.push(format!(
                "feasibility sweep: {}/{} samples feasible, first failure at {:?}",
                s.passed, s.total, s.first_failure
            ));
        }
        out
    }
}

fn worst_boundary_margin(
    spec: &SafetySpec,
    sys: &SystemDynamics,
    i: usize,
    count: usize,
    seed: u64,
) -> Result<BarrierMargin> {
    let h = &spec.barriers()[i];
    let mut points = h.boundary_sample(count, seed, spec.sampling_box())?;
    // random directions almost surely miss isolated points where the
    // margin vanishes; the principal axes catch the symmetric ones
    points.extend(h.principal_boundary_points());
    let mut worst = f64::NEG_INFINITY;
    let mut argworst = Vec::new();
    for x in &points {
        let m = strict_cbf_margin(sys, h, spec.input_set(), x)?;
        if m > worst {
            worst = m;
            argworst = x.iter().copied().collect();
        }
    }
    Ok(BarrierMargin {
        barrier: i,
        worst_margin: worst,
        argworst,
        samples: points.len(),
    })
}

fn min_singular_value(spec: &SafetySpec, x: &DVector<f64>) -> Result<Option<f64>> {
    let active = active_set(spec, x, RESIDUAL_TOL)?;
    if active.indices.len() < 2 {
        return Ok(None);
    }
    let n = spec.state_dim();
    let mut g = DMatrix::zeros(active.indices.len(), n);
    for (r, &i) in active.indices.iter().enumerate() {
        let grad = spec.barriers()[i].gradient_unchecked(x);
        let norm = grad.norm();
        if norm < GRADIENT_FLOOR {
            return Ok(Some(0.0));
        }
        g.row_mut(r).copy_from(&(grad / norm).transpose());
    }
    let sv = g.singular_values();
    Ok(sv.iter().copied().reduce(f64::min))
}

fn sweep_point_ok(spec: &SafetySpec, sys: &SystemDynamics, x: &DVector<f64>) -> Result<bool> {
    if !build_k(spec, sys, x)?.in_omega {
        return Ok(false);
    }
    let r = solve_safety_program(spec, sys, x, &ObjectiveChoice::Feasibility)?;
    Ok(r.status == SolveStatus::Optimal && r.lifted_radius.is_some_and(|rad| rad > 0.0))
}

/// Checks strict CBF margins on `boundary_samples` points per barrier,
/// transversality at every located boundary intersection, and feasibility
/// of the safety program at `sweep_samples` points of the safe set.
pub fn certify(
    spec: &SafetySpec,
    sys: &SystemDynamics,
    boundary_samples: usize,
    sweep_samples: usize,
    seed: u64,
) -> Result<CertificationReport> {
    if boundary_samples == 0 || sweep_samples == 0 {
        return Err(Error::InvalidParameter("sample counts must be positive".into()));
    }
    spec.check_system(sys)?;

    let strict_cbf = (0..spec.len())
        .map(|i| worst_boundary_margin(spec, sys, i, boundary_samples, seed.wrapping_add(1 + i as u64)))
        .collect::<Result<Vec<_>>>()?;

    let mut transversality = Vec::new();
    let mut min_sv: Option<f64> = None;
    let mut pair_seed = seed.wrapping_add(10_000);
    for i in 0..spec.len() {
        for j in i + 1..spec.len() {
            pair_seed = pair_seed.wrapping_add(1);
            for x in boundary_intersection_sample(spec, i, j, INTERSECTION_STARTS, pair_seed)? {
                let rep = match pairwise_transversality(spec, &x, i, j, DEFAULT_ANGLE_TOL) {
                    Ok(r) => r,
                    Err(Error::DegenerateGradient { .. }) => TransversalityReport {
                        point: x.iter().copied().collect(),
                        pair: (i, j),
                        cos_angle: 0.0,
                        pass: false,
                        degenerate: true,
                    },
                    Err(e) => return Err(e),
                };
                transversality.push(rep);
                if let Some(s) = min_singular_value(spec, &x)? {
                    min_sv = Some(min_sv.map_or(s, |m| m.min(s)));
                }
            }
        }
    }

    let mut sampler = SafeSetSampler::new(spec, seed.wrapping_add(20_000))?;
    let mut sweep = SweepReport {
        passed: 0,
        total: sweep_samples,
        first_failure: None,
        sampler_error: None,
    };
    for _ in 0..sweep_samples {
        let x = match sampler.sample() {
            Ok(x) => x,
            Err(e @ Error::LowAcceptance { .. }) => {
                sweep.sampler_error = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        if sweep_point_ok(spec, sys, &x)? {
            sweep.passed += 1;
        } else if sweep.first_failure.is_none() {
            sweep.first_failure = Some(x.iter().copied().collect());
        }
    }

    let certified = strict_cbf.iter().all(|m| m.worst_margin < -MARGIN_FLOOR)
        && transversality.iter().all(|t| t.pass)
        && sweep.passed == sweep.total;
    Ok(CertificationReport {
        strict_cbf,
        transversality,
        feasibility_sweep: sweep,
        min_singular_value: min_sv,
        certified,
    })
}

/// `⟨∇h_i(x), f(x) + g(x)u⟩ ≤ 1e−8` for every `u` in `controls` and every
/// barrier with `|h_i(x)| ≤ 1e−8`. Vacuously true in the interior.
pub fn controls_respect_cones(
    spec: &SafetySpec,
    sys: &SystemDynamics,
    x: &DVector<f64>,
    controls: &[DVector<f64>],
) -> Result<bool> {
    spec.check_system(sys)?;
    let h = spec.h_values(x)?;
    let grads: Vec<DVector<f64>> = spec
        .barriers()
        .iter()
        .zip(h.iter())
        .filter(|(_, v)| v.abs() <= CONE_TOL)
        .map(|(b, _)| b.gradient_unchecked(x))
        .collect();
    for u in controls {
        if u.len() != sys.input_dim() {
            return Err(Error::dims("control", sys.input_dim(), u.len()));
        }
        let xdot = sys.vector_field(x, u);
        if grads.iter().any(|g| g.dot(&xdot) > CONE_TOL) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Samples `n_controls` members of `K_γ(x)` (the Chebyshev center, then
/// seeded points on segments from the center to support points) and checks
/// them with [`controls_respect_cones`].
pub fn cone_intersection_oracle(
    spec: &SafetySpec,
    sys: &SystemDynamics,
    x: &DVector<f64>,
    gamma: f64,
    n_controls: usize,
    seed: u64,
) -> Result<bool> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be nonnegative, got {gamma}"
        )));
    }
    let fm = build_k(spec, sys, x)?;
    if !fm.cheb.feasible || fm.cheb.radius < gamma {
        return Err(Error::EmptyFeasibleSet {
            state: x.iter().copied().collect(),
            gamma,
        });
    }
    let k_gamma = fm.k.erode(gamma)?;
    let center = fm.cheb.center.expect("feasible Chebyshev result has a center");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut controls = Vec::with_capacity(n_controls);
    if n_controls > 0 {
        controls.push(center.clone());
    }
    while controls.len() < n_controls {
        let d = unit_direction(center.len(), &mut rng);
        let s = k_gamma.support_point(&d)?;
        let t: f64 = rand::Rng::random(&mut rng);
        controls.push(&center + (s - &center) * t);
    }
    controls_respect_cones(spec, sys, x, &controls)
}
