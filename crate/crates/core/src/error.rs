use nalgebra::DVector;
use thiserror::Error;

use crate::solver::SolveStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("polytope is empty")]
    EmptyPolytope,

    #[error("polytope contains balls of arbitrary radius")]
    UnboundedRadius,

    #[error("polytope is unbounded in the requested direction")]
    UnboundedDirection,

    #[error("barrier kind not supported here: {0}")]
    UnsupportedBarrierKind(&'static str),

    #[error("sampled state {state:?} lies outside the set where K(x) has nonempty interior")]
    SampleOutsideOmega { state: Vec<f64> },

    #[error("feasible control set is empty at state {state:?} (gamma = {gamma})")]
    EmptyFeasibleSet { state: Vec<f64>, gamma: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("gradient norm below 1e-12 for barrier {barrier}")]
    DegenerateGradient { barrier: usize },

    #[error("solver failed with status {status:?}{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Solver { status: SolveStatus, step: Option<usize> },

    #[error("sampler acceptance rate {rate:.2e} is below the 1e-4 floor")]
    LowAcceptance { rate: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dims(what: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch { what, expected, found }
    }

    pub(crate) fn outside_omega(x: &DVector<f64>) -> Self {
        Error::SampleOutsideOmega {
            state: x.iter().copied().collect(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
