//! Scenario files: strict JSON describing dynamics, barriers, input set,
//! policies, simulation settings, seeds and initial states.
//!
//! ```json
//! {
//!   "system": { "kind": "single_integrator", "n": 2 },
//!   "barriers": [ { "kind": "disk", "center": [-0.5, 0], "radius": 1 } ],
//!   "alphas": [ { "kind": "linear", "k": 1 } ],
//!   "input": { "type": "box", "u_max": 1 },
//!   "policy": { "kind": "chebyshev_center" },
//!   "sim": { "dt": 0.001, "T": 5, "gamma": "auto" },
//!   "seeds": [1],
//!   "x0": { "sample": 20 }
//! }
//! ```
//!
//! Unknown keys anywhere are errors.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::barrier::{AlphaFunction, Barrier, SystemDynamics};
use crate::error::{Error, Result};
use crate::feasible_map::{estimate_gamma, GammaEstimate, SafetySpec};
use crate::geometry::Polytope;
use crate::policy::{Nominal, Policy};
use crate::sampling::{SafeSetSampler, StateSampler};
use crate::simulator::{Integrator, SimConfig, DEFAULT_VIOLATION_TOL};
use crate::solver::ObjectiveChoice;

/// Fraction of the sampled minimum Chebyshev radius used for `"gamma": "auto"`.
pub const AUTO_GAMMA_RHO: f64 = 0.5;
pub const AUTO_GAMMA_SAMPLES: usize = 2000;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemBlock {
    SingleIntegrator {
        n: usize,
    },
    Linear {
        #[serde(rename = "F")]
        f: Rows,
        #[serde(default)]
        d: Option<Vec<f64>>,
        #[serde(rename = "G")]
        g: Rows,
    },
    Polynomial {
        f_lin: Rows,
        f_const: Vec<f64>,
        #[serde(default)]
        f_quad: Vec<Rows>,
        g0: Rows,
        #[serde(default)]
        g_state: Vec<Rows>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BarrierBlock {
    Disk {
        center: Vec<f64>,
        radius: f64,
    },
    /// `(x − c)ᵀ P (x − c) − level`.
    Ellipsoid {
        center: Vec<f64>,
        shape: Rows,
        level: f64,
    },
    /// `normalᵀx − offset`.
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
        #[serde(default)]
        acknowledge_noncompact: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputBlock {
    Box {
        u_max: f64,
    },
    Explicit {
        #[serde(rename = "A")]
        a: Rows,
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NominalBlock {
    Constant(Vec<f64>),
    Feedback { gain: Rows, reference: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveBlock {
    Feasibility,
    LinearCost { c: Vec<f64> },
    Tracking { u_nom: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyBlock {
    ChebyshevCenter,
    QpTracking {
        nominal: NominalBlock,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    LpVertex {
        cost: Vec<f64>,
    },
    RotatingVertex {
        costs: Rows,
        period: usize,
    },
    SafetyProgram {
        objective: ObjectiveBlock,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyList {
    One(PolicyBlock),
    Many(Vec<PolicyBlock>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSetting {
    Fixed(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
    pub gamma: GammaSetting,
    #[serde(default = "default_violation_tol")]
    pub violation_tol: f64,
}

fn default_integrator() -> Integrator {
    Integrator::Rk4
}

fn default_violation_tol() -> f64 {
    DEFAULT_VIOLATION_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCount {
    pub sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialStates {
    Explicit(Vec<f64>),
    Sample(SampleCount),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Raw file contents, before any semantic validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub system: SystemBlock,
    pub barriers: Vec<BarrierBlock>,
    pub alphas: Vec<AlphaFunction>,
    pub input: InputBlock,
    pub policy: PolicyList,
    pub sim: SimBlock,
    pub seeds: Vec<u64>,
    pub x0: InitialStates,
    /// Box used to sample states when half-space barriers leave the safe
    /// set unbounded.
    #[serde(default)]
    pub sample_box: Option<SampleBox>,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: SafetySpec,
    pub sys: SystemDynamics,
    pub policies: Vec<Policy>,
    pub sim: SimBlock,
    pub seeds: Vec<u64>,
    pub x0: InitialStates,
}

fn matrix(what: &str, rows: &Rows) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::Parse(format!("{what}: matrix must be nonempty")));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Parse(format!("{what}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn context(what: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Parse(format!("{what}: {e}"))
}

impl SystemBlock {
    pub fn build(&self) -> Result<SystemDynamics> {
        match self {
            SystemBlock::SingleIntegrator { n } => SystemDynamics::single_integrator(*n).map_err(context("system")),
            SystemBlock::Linear { f, d, g } => {
                let f = matrix("system.F", f)?;
                let d = d.as_deref().map_or_else(|| DVector::zeros(f.nrows()), vector);
                SystemDynamics::linear(f, d, matrix("system.G", g)?).map_err(context("system"))
            }
            SystemBlock::Polynomial {
                f_lin,
                f_const,
                f_quad,
                g0,
                g_state,
            } => {
                let f_quad = f_quad
                    .iter()
                    .map(|q| matrix("system.f_quad", q))
                    .collect::<Result<Vec<_>>>()?;
                let g_state = g_state
                    .iter()
                    .map(|g| matrix("system.g_state", g))
                    .collect::<Result<Vec<_>>>()?;
                SystemDynamics::new(
                    matrix("system.f_lin", f_lin)?,
                    vector(f_const),
                    f_quad,
                    matrix("system.g0", g0)?,
                    g_state,
                )
                .map_err(context("system"))
            }
        }
    }
}

impl BarrierBlock {
    pub fn build(&self) -> Result<Barrier> {
        match self {
            BarrierBlock::Disk { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "disk radius must be positive, got {radius}"
                    )));
                }
                Barrier::disk(vector(center), *radius)
            }
            BarrierBlock::Ellipsoid { center, shape, level } => {
                Barrier::quadratic(vector(center), matrix("ellipsoid shape", shape)?, *level)
            }
            BarrierBlock::Halfspace {
                normal,
                offset,
                acknowledge_noncompact,
            } => Barrier::affine(vector(normal), *offset, *acknowledge_noncompact),
        }
    }
}

impl InputBlock {
    pub fn build(&self, m: usize) -> Result<Polytope> {
        match self {
            InputBlock::Box { u_max } => Polytope::box_input(m, *u_max),
            InputBlock::Explicit { a, b } => Polytope::new(matrix("input.A", a)?, vector(b)),
        }
    }
}

impl PolicyBlock {
    pub fn build(&self, m: usize) -> Result<Policy> {
        Ok(match self {
            PolicyBlock::ChebyshevCenter => Policy::ChebyshevCenter,
            PolicyBlock::QpTracking { nominal, weights } => Policy::QpTracking {
                nominal: match nominal {
                    NominalBlock::Constant(u) => Nominal::Constant(vector(u)),
                    NominalBlock::Feedback { gain, reference } => Nominal::Feedback {
                        gain: matrix("policy.nominal.gain", gain)?,
                        reference: vector(reference),
                    },
                },
                weights: weights.as_deref().map_or_else(|| DVector::from_element(m, 1.0), vector),
            },
            PolicyBlock::LpVertex { cost } => Policy::LpVertex { cost: vector(cost) },
            PolicyBlock::RotatingVertex { costs, period } => Policy::RotatingVertex {
                costs: costs.iter().map(|c| vector(c)).collect(),
                period: *period,
            },
            PolicyBlock::SafetyProgram { objective } => Policy::SafetyProgram {
                objective: match objective {
                    ObjectiveBlock::Feasibility => ObjectiveChoice::Feasibility,
                    ObjectiveBlock::LinearCost { c } => ObjectiveChoice::LinearCost(vector(c)),
                    ObjectiveBlock::Tracking { u_nom, weights } => ObjectiveChoice::Tracking {
                        u_nom: vector(u_nom),
                        weights: vector(weights),
                    },
                },
            },
        })
    }
}

/// Policy with catalog defaults, used when a policy is requested by name
/// but absent from the file: unit costs, zero nominal input, feasibility
/// objective.
pub fn default_policy(name: &str, m: usize) -> Result<Policy> {
    let ones = DVector::from_element(m, 1.0);
    Ok(match name {
        "chebyshev_center" => Policy::ChebyshevCenter,
        "qp_tracking" => Policy::QpTracking {
            nominal: Nominal::Constant(DVector::zeros(m)),
            weights: ones,
        },
        "lp_vertex" => Policy::LpVertex { cost: ones },
        "rotating_vertex" => Policy::RotatingVertex {
            costs: vec![ones.clone(), -ones],
            period: 1,
        },
        "safety_program" => Policy::SafetyProgram {
            objective: ObjectiveChoice::Feasibility,
        },
        other => return Err(Error::Parse(format!("unknown policy name {other:?}"))),
    })
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Scenario::from_file(ScenarioFile::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Scenario::from_json(&text)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let sys = file.system.build()?;
        let (n, m) = (sys.state_dim(), sys.input_dim());
        let barriers = file
            .barriers
            .iter()
            .enumerate()
            .map(|(i, b)| b.build().map_err(|e| Error::Parse(format!("barriers[{i}]: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let alphas = file
            .alphas
            .iter()
            .enumerate()
            .map(|(i, a)| a.validated().map_err(|e| Error::Parse(format!("alphas[{i}]: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let input = file.input.build(m).map_err(context("input"))?;
        let mut spec = SafetySpec::new(barriers, alphas, input).map_err(context("specification"))?;
        if let Some(b) = &file.sample_box {
            spec = spec
                .with_sampling_box(vector(&b.lo), vector(&b.hi))
                .map_err(context("sample_box"))?;
        }
        if spec.state_dim() != n || spec.input_dim() != m {
            return Err(Error::Parse(format!(
                "specification is {}-state/{}-input but the system is {n}-state/{m}-input",
                spec.state_dim(),
                spec.input_dim()
            )));
        }

        let blocks = match &file.policy {
            PolicyList::One(p) => std::slice::from_ref(p),
            PolicyList::Many(ps) => ps.as_slice(),
        };
        if blocks.is_empty() {
            return Err(Error::Parse("policy: at least one policy is required".into()));
        }
        let policies = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let build = || -> Result<Policy> {
                    let p = b.build(m)?;
                    p.validate(n, m, spec.len())?;
                    Ok(p)
                };
                build().map_err(|e| Error::Parse(format!("policy[{i}]: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;

        let sim = file.sim;
        if let GammaSetting::Fixed(g) = sim.gamma {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::Parse(format!(
                    "sim.gamma must be nonnegative or \"auto\", got {g}"
                )));
            }
        }
        SimConfig {
            dt: sim.dt,
            t_final: sim.t_final,
            integrator: sim.integrator,
            gamma: 0.0,
            violation_tol: sim.violation_tol,
            record_margins: true,
        }
        .validate()
        .map_err(context("sim"))?;

        if file.seeds.is_empty() {
            return Err(Error::Parse("seeds: at least one seed is required".into()));
        }
        match &file.x0 {
            InitialStates::Explicit(x) if x.len() != n => {
                return Err(Error::Parse(format!("x0: expected {n} entries, found {}", x.len())));
            }
            InitialStates::Sample(SampleCount { sample: 0 }) => {
                return Err(Error::Parse("x0: sample count must be positive".into()));
            }
            _ => {}
        }

        Ok(Scenario {
            spec,
            sys,
            policies,
            sim,
            seeds: file.seeds,
            x0: file.x0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.spec.state_dim()
    }

    /// `γ` for the runs. `"auto"` samples `int(S_I)` with the first seed and
    /// takes `0.5 · min R_C(K(x))`; a sample outside Ω is an error.
    pub fn resolve_gamma(&self) -> Result<(f64, Option<GammaEstimate>)> {
        match self.sim.gamma {
            GammaSetting::Fixed(g) => Ok((g, None)),
            GammaSetting::Auto(_) => {
                let est = self.estimate_gamma()?;
                Ok((est.gamma, Some(est)))
            }
        }
    }

    pub fn estimate_gamma(&self) -> Result<GammaEstimate> {
        let mut sampler = SafeSetSampler::new(&self.spec, self.seeds[0])?.interior();
        estimate_gamma(&self.spec, &self.sys, &mut sampler, AUTO_GAMMA_RHO, AUTO_GAMMA_SAMPLES)
    }

    /// Initial states for one seed: the explicit `x0`, or `count` samples of
    /// `int(S_I ∩ Ω)`.
    pub fn initial_states(&self, seed: u64) -> Result<Vec<DVector<f64>>> {
        match &self.x0 {
            InitialStates::Explicit(x) => Ok(vec![vector(x)]),
            InitialStates::Sample(SampleCount { sample }) => {
                let mut s = SafeSetSampler::new(&self.spec, seed)?
                    .interior()
                    .within_omega(&self.sys);
                (0..*sample).map(|_| s.sample()).collect()
            }
        }
    }

    pub fn sim_config(&self, gamma: f64) -> SimConfig {
        SimConfig {
            dt: self.sim.dt,
            t_final: self.sim.t_final,
            integrator: self.sim.integrator,
            gamma,
            violation_tol: self.sim.violation_tol,
            record_margins: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_DISK: &str = r#"{
        "system": { "kind": "single_integrator", "n": 2 },
        "barriers": [
            { "kind": "disk", "center": [-0.5, 0], "radius": 1 },
            { "kind": "disk", "center": [0.5, 0], "radius": 1 }
        ],
        "alphas": [ { "kind": "linear", "k": 1 }, { "kind": "linear", "k": 1 } ],
        "input": { "type": "box", "u_max": 1 },
        "policy": [
            { "kind": "chebyshev_center" },
            { "kind": "rotating_vertex", "costs": [[1, 1], [-1, -1]], "period": 1 }
        ],
        "sim": { "dt": 0.001, "T": 5, "gamma": "auto" },
        "seeds": [3],
        "x0": { "sample": 4 }
    }"#;

    #[test]
    fn parses_catalog_scenario() {
        let sc = Scenario::from_json(TWO_DISK).unwrap();
        assert_eq!(sc.policies.len(), 2);
        assert_eq!(sc.sim.integrator, Integrator::Rk4);
        assert_eq!(sc.sim.violation_tol, 1e-6);
        assert!(matches!(sc.sim.gamma, GammaSetting::Auto(_)));
        let xs = sc.initial_states(3).unwrap();
        assert_eq!(xs.len(), 4);
        assert_eq!(xs, sc.initial_states(3).unwrap());
        for x in &xs {
            assert!(sc.spec.h_values(x).unwrap().iter().all(|h| *h < 0.0));
        }
    }

    #[test]
    fn auto_gamma_is_half_the_sampled_radius() {
        let sc = Scenario::from_json(TWO_DISK).unwrap();
        let (g, est) = sc.resolve_gamma().unwrap();
        let est = est.unwrap();
        assert_eq!(g, 0.5 * est.min_radius);
        // the worst states are the two lens corners, where R_C ≈ 0.464
        assert!(est.min_radius > 0.46 && est.min_radius < 0.6, "{}", est.min_radius);
    }

    #[test]
    fn rejects_unknown_keys_with_location() {
        let bad = TWO_DISK.replace("\"u_max\": 1", "\"u_max\": 1, \"umax\": 2");
        let err = Scenario::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("umax") && err.contains("line"), "{err}");
        let bad = TWO_DISK.replace("\"seeds\"", "\"seed\"");
        assert!(Scenario::from_json(&bad).is_err());
        let bad = TWO_DISK.replace("\"radius\": 1 }", "\"radius\": 1, \"extra\": 0 }");
        assert!(Scenario::from_json(&bad).is_err());
    }

    #[test]
    fn rejects_semantic_errors() {
        for (from, to) in [
            ("\"u_max\": 1", "\"u_max\": 0"),
            ("\"n\": 2", "\"n\": 3"),
            ("\"gamma\": \"auto\"", "\"gamma\": \"big\""),
            ("\"gamma\": \"auto\"", "\"gamma\": -1"),
            ("\"seeds\": [3]", "\"seeds\": []"),
            ("{ \"sample\": 4 }", "[0, 0, 0]"),
            ("\"period\": 1", "\"period\": 0"),
            ("\"dt\": 0.001", "\"dt\": 10"),
        ] {
            let bad = TWO_DISK.replace(from, to);
            assert_ne!(bad, TWO_DISK);
            assert!(Scenario::from_json(&bad).is_err(), "{to}");
        }
    }

    #[test]
    fn explicit_blocks() {
        let text = r#"{
            "system": { "kind": "linear", "F": [[1, 0], [0, 1]], "G": [[1, 0], [0, 1]] },
            "barriers": [ { "kind": "ellipsoid", "center": [0, 0], "shape": [[1, 0], [0, 1]], "level": 1 } ],
            "alphas": [ { "kind": "cubic", "k": 2 } ],
            "input": { "type": "explicit", "A": [[1, 0], [-1, 0], [0, 1], [0, -1]], "b": [1, 1, 1, 1] },
            "policy": { "kind": "qp_tracking", "nominal": { "gain": [[1, 0], [0, 1]], "reference": [0, 0] } },
            "sim": { "dt": 0.01, "T": 1, "integrator": "euler", "gamma": 0.1, "violation_tol": 0 },
            "seeds": [1],
            "x0": [0.1, 0.2]
        }"#;
        let sc = Scenario::from_json(text).unwrap();
        assert_eq!(sc.sim.integrator, Integrator::Euler);
        assert_eq!(sc.resolve_gamma().unwrap().0, 0.1);
        assert_eq!(sc.initial_states(9).unwrap(), vec![vector(&[0.1, 0.2])]);
        assert!(matches!(
            &sc.policies[0],
            Policy::QpTracking {
                nominal: Nominal::Feedback { .. },
                ..
            }
        ));
    }

    #[test]
    fn halfspaces_need_acknowledgement_and_a_box() {
        let text = r#"{
            "system": { "kind": "single_integrator", "n": 1 },
            "barriers": [ { "kind": "halfspace", "normal": [1], "offset": 1 ACK } ],
            "alphas": [ { "kind": "linear", "k": 1 } ],
            "input": { "type": "box", "u_max": 1 },
            "policy": { "kind": "chebyshev_center" },
            "sim": { "dt": 0.01, "T": 1, "gamma": 0.1 },
            "seeds": [1],
            "x0": { "sample": 2 } BOX
        }"#;
        assert!(Scenario::from_json(&text.replace("ACK", "").replace("BOX", "")).is_err());
        let ack = text.replace("ACK", ", \"acknowledge_noncompact\": true");
        let sc = Scenario::from_json(&ack.replace("BOX", "")).unwrap();
        assert!(sc.initial_states(1).is_err());
        let sc = Scenario::from_json(&ack.replace("BOX", ", \"sample_box\": { \"lo\": [-3], \"hi\": [3] }")).unwrap();
        assert!(sc.initial_states(1).unwrap().iter().all(|x| x[0] < 1.0 && x[0] >= -3.0));
    }

    #[test]
    fn default_policies() {
        for name in [
            "chebyshev_center",
            "qp_tracking",
            "lp_vertex",
            "rotating_vertex",
            "safety_program",
        ] {
            let p = default_policy(name, 2).unwrap();
            assert_eq!(p.name(), name);
            p.validate(2, 2, 1).unwrap();
        }
        assert!(default_policy("mpc", 2).is_err());
    }
}
