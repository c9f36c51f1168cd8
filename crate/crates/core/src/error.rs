use thiserror::Error;

use crate::input::Violation;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature order {0} outside the supported range [1, 512]")]
    OrderOutOfRange(usize),

    #[error("integrand returned non-finite value {value} at node {node}")]
    NonFiniteIntegrand { node: f64, value: f64 },

    #[error("channel matrix entries must be finite")]
    NonFiniteMatrix,

    #[error("invalid ellipse radii r_p={r_p}, r_m={r_m}: need finite r_p >= r_m >= 0")]
    InvalidRadii { r_p: f64, r_m: f64 },

    #[error("x1={x1} lies outside [-r_p, r_p] with r_p={r_p}")]
    OutsideEllipse { x1: f64, r_p: f64 },

    #[error("derivative undefined within {edge:e} of the ellipse endpoints (x1={x1}, r_p={r_p})")]
    EndpointDerivative { x1: f64, r_p: f64, edge: f64 },

    #[error("invalid distribution: {}", format_violations(.0))]
    InvalidDistribution(Vec<Violation>),

    #[error("invalid solver options: {0}")]
    InvalidOptions(String),

    #[error("malformed JSON: {0}")]
    ParseJson(String),

    #[error(
        "r_p={r_p} exceeds sqrt(2): boundary support is not guaranteed in this regime; \
         pass the boundary-heuristic override to solve anyway"
    )]
    RegimeRefusal { r_p: f64 },

    #[error("solver did not converge within {iterations} iterations (best capacity {capacity})")]
    NonConvergence { iterations: usize, capacity: f64 },

    #[error("circle radius {0} outside [0, 2.4], where the uniform-circle input is the capacity oracle")]
    CircleRadiusOutOfRange(f64),

    #[error("threshold integral came out negative ({value:e}) at r_p={r_p}; quadrature is suspect")]
    ThresholdIntegralNegative { r_p: f64, value: f64 },

    #[error("curve sample at r_p={r_p} failed: {source}")]
    CurveSample {
        r_p: f64,
        #[source]
        source: Box<Error>,
    },
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
