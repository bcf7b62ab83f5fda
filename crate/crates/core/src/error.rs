use thiserror::Error;

use crate::exprlang::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bodies are sampled on different grids")]
    GridMismatch,

    #[error("singular Jacobian (|det| = {det:e})")]
    SingularJacobian { det: f64 },

    #[error("non-positive or non-finite value {value} at node {node}")]
    NonPositive { node: usize, value: f64 },

    #[error("homogeneity audit failed: relative defect {defect:e} at scale {scale}")]
    NotHomogeneous { defect: f64, scale: f64 },

    #[error("{what} did not converge after {iterations} iterations (best value {best})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        best: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("orbit does not close after one period (gap {gap:e})")]
    OrbitNotClosed { gap: f64 },

    #[error("radial function varies by {variation:e} along a reference orbit")]
    NotFlowInvariant { variation: f64 },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of an iterative or numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Numerical(_)
                | Error::OrbitNotClosed { .. }
                | Error::NotFlowInvariant { .. }
        )
    }
}
