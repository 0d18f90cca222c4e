//! Consensus-based distributed gradient descent with and without gradient
//! perturbations, for finite sums of smooth non-convex functions over an
//! undirected network of agents.
//!
//! * [`topology`]: graphs, lazy Metropolis mixing matrices and their spectra.
//! * [`objectives`]: component functions, the lifted objective `F`, the
//!   penalized auxiliary function `Q_alpha`, and the quartic and logistic
//!   example instances.
//! * [`engine`]: parameter schedule, DGD / NDGD / gradient descent on
//!   `Q_alpha`, run traces and stationarity checks.
//! * [`analysis`]: exact and Monte Carlo checks of the eigenvalue sandwich,
//!   consensus and descent bounds, coupling-sequence decomposition and the
//!   concentration inequalities behind them.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod objectives;
pub mod rng;
pub mod topology;

pub use error::{NdgdError, Result};

/// Decimal rendering with 17 significant digits; parsing it back yields the
/// same `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}
