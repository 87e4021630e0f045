use thiserror::Error;

use crate::graph::GraphError;
use crate::numerics::SolveError;

/// Errors raised by the opinion-dynamics layers (FJ, media, periods).
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("opinion {value} at node {index} lies outside [0, 1]")]
    OpinionOutOfRange { index: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("source opinion is truncated ((1+gamma) * mean = {scaled_mean} > 1); use the truncated-regime formula")]
    Truncated { scaled_mean: f64 },
    #[error("graph is not regular (d_min = {d_min}, d_max = {d_max})")]
    NotRegular { d_min: f64, d_max: f64 },
    #[error("period {period}: {source}")]
    Period {
        period: usize,
        #[source]
        source: Box<ModelError>,
    },
}
