//! Fixed-step closed-loop simulation with sample-and-hold inputs.
//!
//! At every grid time `t_k = k·dt` the feasible set `K(x_k)` is rebuilt from
//! scratch, a control is selected from `K_γ(x_k)` and held constant while the
//! integrator advances the state by one step.

use std::io::{Read, Write};
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::barrier::SystemDynamics;
use crate::error::{Error, Result};
use crate::feasible_map::{build_k, SafetySpec};
use crate::policy::{select_from_map, Policy};

pub const DEFAULT_VIOLATION_TOL: f64 = 1e-6;
pub const DEFAULT_CONE_BAND: f64 = 0.05;
const MAX_STEPS: f64 = 1e7;
const CONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub integrator: Integrator,
    pub gamma: f64,
    pub violation_tol: f64,
    /// Record the Chebyshev radius of `K(x_k)` at every step.
    pub record_margins: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_final: f64, gamma: f64) -> Self {
        SimConfig {
            dt,
            t_final,
            integrator: Integrator::Rk4,
            gamma,
            violation_tol: DEFAULT_VIOLATION_TOL,
            record_margins: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= self.dt) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "T must be finite and at least dt, got T = {} and dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.t_final / self.dt > MAX_STEPS {
            return Err(Error::InvalidParameter("T/dt exceeds 1e7 steps".into()));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be nonnegative, got {}",
                self.gamma
            )));
        }
        if !(self.violation_tol >= 0.0) {
            return Err(Error::InvalidParameter("violation_tol must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `controls[k]` is applied on `[t_k, t_{k+1})`; one fewer than states.
    pub controls: Vec<DVector<f64>>,
    pub h_values: Vec<DVector<f64>>,
    /// Empty when margins were not recorded.
    pub cheb_radii: Vec<f64>,
    pub policy_events: Vec<(usize, String)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Grid spacing inferred from the first two times.
    pub fn dt(&self) -> Option<f64> {
        match self.times.as_slice() {
            [t0, t1, ..] => Some(t1 - t0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitReason {
    Completed,
    LeftOmega(usize),
    InfeasibleSelection(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub barrier: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub max_h: Vec<f64>,
    pub min_cheb_radius: f64,
    pub violations: Vec<Violation>,
    pub exit_reason: ExitReason,
    pub wall_time: f64,
}

impl RunReport {
    /// JSON document with the report's field names. `wall_time` is written
    /// as 0 unless `timing` is set, so that repeated runs are byte-identical.
    pub fn to_json(&self, timing: bool) -> String {
        let mut r = self.clone();
        if !timing {
            r.wall_time = 0.0;
        }
        serde_json::to_string_pretty(&r).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn worst_h(&self) -> f64 {
        self.max_h.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn step_state(
    sys: &SystemDynamics,
    integrator: Integrator,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    match integrator {
        Integrator::Euler => x + sys.vector_field(x, u) * dt,
        Integrator::Rk4 => {
            let k1 = sys.vector_field(x, u);
            let k2 = sys.vector_field(&(x + &k1 * (dt / 2.0)), u);
            let k3 = sys.vector_field(&(x + &k2 * (dt / 2.0)), u);
            let k4 = sys.vector_field(&(x + &k3 * dt), u);
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        }
    }
}

/// Re-integrates the logged controls from the first recorded state.
pub fn replay(sys: &SystemDynamics, traj: &Trajectory, integrator: Integrator) -> Result<Vec<DVector<f64>>> {
    let dt = traj
        .dt()
        .ok_or_else(|| Error::InvalidParameter("replay needs at least two states".into()))?;
    let mut x = traj.states[0].clone();
    sys.check_state(&x)?;
    let mut out = vec![x.clone()];
    for u in &traj.controls {
        x = step_state(sys, integrator, &x, u, dt);
        out.push(x.clone());
    }
    Ok(out)
}

pub fn simulate(
    spec: &SafetySpec,
    sys: &SystemDynamics,
    policy: &Policy,
    x0: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<(Trajectory, RunReport)> {
    let clock = Instant::now();
    cfg.validate()?;
    spec.check_system(sys)?;
    sys.check_state(x0)?;
    policy.validate(spec.state_dim(), spec.input_dim(), spec.len())?;

    let h0 = spec.h_values(x0)?;
    if let Some(i) = h0.iter().position(|h| !(*h < 0.0)) {
        return Err(Error::PreconditionViolated(format!(
            "x0 is not in the interior of safe set {} (h = {:e})",
            i + 1,
            h0[i]
        )));
    }
    if !build_k(spec, sys, x0)?.in_omega {
        return Err(Error::PreconditionViolated(
            "K(x0) has empty interior (x0 outside Omega)".into(),
        ));
    }

    let steps = cfg.steps();
    let mut traj = Trajectory::default();
    let mut min_radius = f64::INFINITY;
    let mut exit = ExitReason::Completed;
    let mut x = x0.clone();

    for k in 0..=steps {
        let fm = build_k(spec, sys, &x)?;
        traj.times.push(k as f64 * cfg.dt);
        traj.h_values.push(spec.h_values(&x)?);
        traj.states.push(x.clone());
        let radius = if fm.cheb.feasible {
            fm.cheb.radius
        } else {
            f64::NEG_INFINITY
        };
        min_radius = min_radius.min(radius);
        if cfg.record_margins {
            traj.cheb_radii.push(radius);
        }
        if !fm.in_omega {
            exit = ExitReason::LeftOmega(k);
            break;
        }
        if k == steps {
            break;
        }
        let sel = match select_from_map(policy, &fm, spec, sys, &x, k, cfg.gamma) {
            Ok(sel) => sel,
            Err(Error::EmptyFeasibleSet { .. }) => {
                exit = ExitReason::InfeasibleSelection(k);
                break;
            }
            Err(Error::Solver { status, .. }) => return Err(Error::Solver { status, step: Some(k) }),
            Err(e) => return Err(e),
        };
        if let Some(tag) = sel.event {
            traj.policy_events.push((k, tag.to_string()));
        }
        x = step_state(sys, cfg.integrator, &x, &sel.u, cfg.dt);
        traj.controls.push(sel.u);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "state became non-finite after step {k}"
            )));
        }
    }

    let mut max_h = vec![f64::NEG_INFINITY; spec.len()];
    let mut violations = Vec::new();
    for (k, h) in traj.h_values.iter().enumerate() {
        for (i, &v) in h.iter().enumerate() {
            max_h[i] = max_h[i].max(v);
            if v > cfg.violation_tol {
                violations.push(Violation {
                    step: k,
                    barrier: i,
                    value: v,
                });
            }
        }
    }
    let report = RunReport {
        max_h,
        min_cheb_radius: min_radius,
        violations,
        exit_reason: exit,
        wall_time: clock.elapsed().as_secs_f64(),
    };
    Ok((traj, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceCheck {
    pub ok: bool,
    pub worst: f64,
    /// `(step, barrier)` of the worst value; `None` for an empty trajectory.
    pub argworst: Option<(usize, usize)>,
}

/// `max_{k,i} h_i(x_k) ≤ tol`, with `h` recomputed from the states.
pub fn verify_invariance(traj: &Trajectory, spec: &SafetySpec, tol: f64) -> Result<InvarianceCheck> {
    let mut worst = f64::NEG_INFINITY;
    let mut argworst = None;
    for (k, x) in traj.states.iter().enumerate() {
        for (i, v) in spec.h_values(x)?.iter().enumerate() {
            if *v > worst {
                worst = *v;
                argworst = Some((k, i));
            }
        }
    }
    Ok(InvarianceCheck {
        ok: worst <= tol,
        worst,
        argworst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeViolationKind {
    /// `⟨∇h_i, ẋ⟩ > −α_i(h_i) + 1e−8`.
    Constraint,
    /// On the boundary, `⟨∇h_i, ẋ⟩ > 1e−8`.
    TangentCone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeViolation {
    pub step: usize,
    pub barrier: usize,
    pub kind: ConeViolationKind,
    /// Amount by which the inequality fails.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConeCheckReport {
    /// Number of `(step, barrier)` pairs inside the band.
    pub checked: usize,
    pub violations: Vec<ConeViolation>,
}

/// Checks the barrier constraints at every recorded `(x_k, u_k)` with
/// `|h_i(x_k)| ≤ band`, recomputing everything from the states and controls.
pub fn tangent_cone_check(
    spec: &SafetySpec,
    sys: &SystemDynamics,
    traj: &Trajectory,
    band: f64,
) -> Result<ConeCheckReport> {
    if !(band > 0.0) {
        return Err(Error::InvalidParameter(format!("band must be positive, got {band}")));
    }
    spec.check_system(sys)?;
    let mut report = ConeCheckReport::default();
    for (k, (x, u)) in traj.states.iter().zip(&traj.controls).enumerate() {
        sys.check_state(x)?;
        if u.len() != sys.input_dim() {
            return Err(Error::dims("control", sys.input_dim(), u.len()));
        }
        let xdot = sys.vector_field(x, u);
        for (i, (h, alpha)) in spec.barriers().iter().zip(spec.alphas()).enumerate() {
            let hv = h.eval_unchecked(x);
            if hv.abs() > band {
                continue;
            }
            report.checked += 1;
            let rate = h.gradient_unchecked(x).dot(&xdot);
            let excess = rate + alpha.eval(hv) - CONE_TOL;
            if excess > 0.0 {
                report.violations.push(ConeViolation {
                    step: k,
                    barrier: i,
                    kind: ConeViolationKind::Constraint,
                    excess,
                });
            }
            if hv.abs() <= CONE_TOL && rate > CONE_TOL {
                report.violations.push(ConeViolation {
                    step: k,
                    barrier: i,
                    kind: ConeViolationKind::TangentCone,
                    excess: rate - CONE_TOL,
                });
            }
        }
    }
    Ok(report)
}

fn header(n: usize, m: usize, nh: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|j| format!("x{j}")));
    cols.extend((1..=m).map(|j| format!("u{j}")));
    cols.extend((1..=nh).map(|j| format!("h{j}")));
    cols.push("rc".into());
    cols
}

fn csv_err(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        _ => Error::Parse(e.to_string()),
    }
}

/// Writes `t,x1..xn,u1..um,h1..hN,rc`. The final row has empty control
/// fields, and `rc` is empty when margins were not recorded.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, m: usize, out: W) -> Result<()> {
    let (n, nh) = match (traj.states.first(), traj.h_values.first()) {
        (Some(x), Some(h)) => (x.len(), h.len()),
        _ => return Err(Error::InvalidParameter("cannot write an empty trajectory".into())),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(n, m, nh)).map_err(csv_err)?;
    let mut row = Vec::with_capacity(n + m + nh + 2);
    for k in 0..traj.len() {
        row.clear();
        row.push(traj.times[k].to_string());
        row.extend(traj.states[k].iter().map(f64::to_string));
        match traj.controls.get(k) {
            Some(u) => row.extend(u.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        row.extend(traj.h_values[k].iter().map(f64::to_string));
        row.push(traj.cheb_radii.get(k).map(f64::to_string).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn count_prefix(cols: &[String], start: usize, prefix: char) -> usize {
    let mut count = 0;
    while let Some(c) = cols.get(start + count) {
        if *c != format!("{prefix}{}", count + 1) {
            break;
        }
        count += 1;
    }
    count
}

/// Reads a trajectory written by [`write_trajectory_csv`]. Dimensions are
/// taken from the header; policy events are not part of the format.
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Trajectory> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let cols: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if cols.first().map(String::as_str) != Some("t") {
        return Err(Error::Parse("trajectory header must start with 't'".into()));
    }
    let n = count_prefix(&cols, 1, 'x');
    let m = count_prefix(&cols, 1 + n, 'u');
    let nh = count_prefix(&cols, 1 + n + m, 'h');
    if n == 0 || cols.len() != n + m + nh + 2 || cols.last().map(String::as_str) != Some("rc") {
        return Err(Error::Parse(format!("unexpected trajectory header {}", cols.join(","))));
    }

    let mut traj = Trajectory::default();
    let mut rows_done = false;
    let mut rc_present: Option<bool> = None;
    for (idx, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = idx + 2;
        if rows_done {
            return Err(Error::Parse(format!("line {line}: row after the final row")));
        }
        let num = |j: usize| -> Result<f64> {
            let s = &rec[j];
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {line}, column {}: invalid number {s:?}", cols[j])))
        };
        traj.times.push(num(0)?);
        traj.states.push(DVector::from_iterator(
            n,
            (1..=n).map(&num).collect::<Result<Vec<_>>>()?,
        ));
        let u_fields = &rec.iter().collect::<Vec<_>>()[1 + n..1 + n + m];
        if m > 0 && u_fields.iter().all(|s| s.is_empty()) {
            rows_done = true;
        } else if m > 0 {
            traj.controls.push(DVector::from_iterator(
                m,
                (1 + n..1 + n + m).map(&num).collect::<Result<Vec<_>>>()?,
            ));
        }
        traj.h_values.push(DVector::from_iterator(
            nh,
            (1 + n + m..1 + n + m + nh).map(&num).collect::<Result<Vec<_>>>()?,
        ));
        let rc_idx = 1 + n + m + nh;
        let has_rc = !rec[rc_idx].is_empty();
        if *rc_present.get_or_insert(has_rc) != has_rc {
            return Err(Error::Parse(format!("line {line}: rc column is partially filled")));
        }
        if has_rc {
            traj.cheb_radii.push(num(rc_idx)?);
        }
    }
    if traj.is_empty() {
        return Err(Error::Parse("trajectory has no rows".into()));
    }
    if m > 0 && traj.controls.len() + 1 != traj.states.len() {
        return Err(Error::Parse("only the final row may have empty control fields".into()));
    }
    if traj.times.iter().any(|t| !t.is_finite()) || traj.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parse("times must be finite and strictly increasing".into()));
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{AlphaFunction, Barrier};
    use crate::geometry::Polytope;
    use crate::policy::Nominal;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn interval() -> (SafetySpec, SystemDynamics) {
        let spec = SafetySpec::new(
            vec![Barrier::disk(v(&[0.0]), 1.0).unwrap()],
            vec![AlphaFunction::linear(1.0).unwrap()],
            Polytope::box_input(1, 1.0).unwrap(),
        )
        .unwrap();
        (spec, SystemDynamics::single_integrator(1).unwrap())
    }

    fn two_disk() -> (SafetySpec, SystemDynamics) {
        let spec = SafetySpec::new(
            vec![
                Barrier::disk(v(&[-0.5, 0.0]), 1.0).unwrap(),
                Barrier::disk(v(&[0.5, 0.0]), 1.0).unwrap(),
            ],
            vec![AlphaFunction::linear(1.0).unwrap(); 2],
            Polytope::box_input(2, 1.0).unwrap(),
        )
        .unwrap();
        (spec, SystemDynamics::single_integrator(2).unwrap())
    }

    #[test]
    fn centered_interval_barely_moves() {
        let (spec, sys) = interval();
        let cfg = SimConfig::new(1e-3, 1.0, 0.25);
        let (traj, rep) = simulate(&spec, &sys, &Policy::ChebyshevCenter, &v(&[0.0]), &cfg).unwrap();
        assert_eq!(rep.exit_reason, ExitReason::Completed);
        assert_eq!(traj.len(), 1001);
        assert_eq!(traj.controls.len(), 1000);
        assert!(traj.states.iter().all(|x| x[0].abs() <= 1e-3));
        assert!(rep.violations.is_empty());
    }

    #[test]
    fn rejects_bad_starts() {
        let (spec, sys) = interval();
        let cfg = SimConfig::new(1e-2, 0.1, 0.0);
        for x0 in [1.0, 1.5] {
            let err = simulate(&spec, &sys, &Policy::ChebyshevCenter, &v(&[x0]), &cfg).unwrap_err();
            assert!(matches!(err, Error::PreconditionViolated(_)), "{err}");
        }
        let mut bad = cfg.clone();
        bad.t_final = 1e-3;
        assert!(simulate(&spec, &sys, &Policy::ChebyshevCenter, &v(&[0.0]), &bad).is_err());
    }

    #[test]
    fn two_disk_vertex_policy_stays_inside() {
        let (spec, sys) = two_disk();
        // small γ lets the state settle near h ≈ −γ‖∇h‖, inside the cone band
        let cfg = SimConfig::new(1e-3, 3.0, 0.002);
        let p = Policy::LpVertex { cost: v(&[-1.0, -1.0]) };
        let (traj, rep) = simulate(&spec, &sys, &p, &v(&[0.0, 0.0]), &cfg).unwrap();
        assert_eq!(rep.exit_reason, ExitReason::Completed);
        assert!(rep.worst_h() <= 1e-6, "worst h {}", rep.worst_h());
        let chk = verify_invariance(&traj, &spec, 1e-6).unwrap();
        assert!(chk.ok);
        assert_eq!(chk.worst, rep.worst_h());
        assert!(rep.worst_h() > -0.05, "worst {}", rep.worst_h());
        let cone = tangent_cone_check(&spec, &sys, &traj, DEFAULT_CONE_BAND).unwrap();
        assert!(cone.checked > 0);
        assert!(cone.violations.is_empty(), "{:?}", cone.violations.first());
    }

    #[test]
    fn euler_replay_reproduces_states() {
        let (spec, sys) = two_disk();
        let mut cfg = SimConfig::new(1e-3, 0.5, 0.1);
        cfg.integrator = Integrator::Euler;
        let p = Policy::QpTracking {
            nominal: Nominal::Constant(v(&[1.0, 0.3])),
            weights: v(&[1.0, 1.0]),
        };
        let (traj, _) = simulate(&spec, &sys, &p, &v(&[0.1, -0.2]), &cfg).unwrap();
        let states = replay(&sys, &traj, Integrator::Euler).unwrap();
        for (a, b) in states.iter().zip(&traj.states) {
            assert!((a - b).amax() <= 1e-9);
        }
    }

    #[test]
    fn fabricated_violation_is_located() {
        let (spec, _) = two_disk();
        let traj = Trajectory {
            times: vec![0.0, 0.1, 0.2],
            states: vec![v(&[0.0, 0.0]), v(&[-1.2, 0.0]), v(&[0.0, 0.1])],
            ..Default::default()
        };
        let chk = verify_invariance(&traj, &spec, 1e-6).unwrap();
        assert!(!chk.ok);
        // (−1.2, 0) is outside the disk centered at (0.5, 0)
        assert_eq!(chk.argworst, Some((1, 1)));
        assert!((chk.worst - (1.7f64.powi(2) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn grazing_start_depends_on_tolerance() {
        let traj = Trajectory {
            times: vec![0.0, 0.1],
            states: vec![v(&[1.0 + 1e-7]), v(&[0.5])],
            ..Default::default()
        };
        let (spec, _) = interval();
        assert!(!verify_invariance(&traj, &spec, 0.0).unwrap().ok);
        assert!(verify_invariance(&traj, &spec, 1e-6).unwrap().ok);
    }

    #[test]
    fn cone_check_sign_and_violation() {
        let (spec, sys) = interval();
        let ok = Trajectory {
            times: vec![0.0, 0.1],
            states: vec![v(&[1.0]), v(&[0.975])],
            controls: vec![v(&[-0.25])],
            ..Default::default()
        };
        let rep = tangent_cone_check(&spec, &sys, &ok, 0.05).unwrap();
        assert_eq!(rep.checked, 1);
        assert!(rep.violations.is_empty());

        let bad = Trajectory {
            controls: vec![v(&[0.5])],
            ..ok
        };
        let rep = tangent_cone_check(&spec, &sys, &bad, 0.05).unwrap();
        let kinds: Vec<_> = rep.violations.iter().map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            vec![ConeViolationKind::Constraint, ConeViolationKind::TangentCone]
        );
    }

    #[test]
    fn csv_round_trip() {
        let (spec, sys) = two_disk();
        let cfg = SimConfig::new(1e-2, 0.3, 0.1);
        let (traj, _) = simulate(&spec, &sys, &Policy::ChebyshevCenter, &v(&[0.2, 0.1]), &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, 2, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2,u1,u2,h1,h2,rc\n"));
        let last = text.lines().last().unwrap();
        assert_eq!(last.split(',').nth(3), Some(""));
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        assert_eq!(back.states, traj.states);
        assert_eq!(back.controls, traj.controls);
        assert_eq!(back.h_values, traj.h_values);
        assert_eq!(back.cheb_radii, traj.cheb_radii);
        assert_eq!(back.times, traj.times);
    }

    #[test]
    fn csv_rejects_malformed() {
        for text in [
            "",
            "t,x1,rc\n",
            "t,x1,u1,h1\n0,0,,0\n",
            "t,x1,u1,h1,rc\n0,0,1,x,\n",
            "t,x1,u1,h1,rc\n0,0,,0,\n1,0,,0,\n",
            "t,x1,u1,h1,rc\n1,0,1,0,\n0,0,,0,\n",
        ] {
            assert!(read_trajectory_csv(text.as_bytes()).is_err(), "{text:?}");
        }
    }

    #[test]
    fn report_json_is_stable() {
        let rep = RunReport {
            max_h: vec![-0.1, -0.2],
            min_cheb_radius: 0.4,
            violations: vec![],
            exit_reason: ExitReason::LeftOmega(3),
            wall_time: 1.23,
        };
        let a = rep.to_json(false);
        assert!(a.contains("\"wall_time\": 0.0"));
        assert!(a.contains("\"LeftOmega\": 3"));
        let back = RunReport::from_json(&rep.to_json(true)).unwrap();
        assert_eq!(back, rep);
    }
}
