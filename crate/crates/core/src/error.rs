use thiserror::Error;

use crate::engine::RunTrace;

#[derive(Debug, Error)]
pub enum NdgdError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    /// `lambda_2 + alpha * L_g >= 1`; the consensus bound has no finite value.
    #[error(
        "schedule infeasible: lambda_2 + alpha*L_g = {contraction:.6} >= 1 at rho = {rho} \
         (need rho > {required_rho:.6})"
    )]
    ScheduleInfeasible { rho: f64, contraction: f64, required_rho: f64 },

    /// The iteration produced a non-finite value. `trace` holds everything
    /// recorded up to the last finite iterate.
    #[error("iterate diverged at k = {k}")]
    Diverged { k: usize, trace: Box<RunTrace> },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NdgdError>;
