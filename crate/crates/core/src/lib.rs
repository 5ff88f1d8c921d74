//! Network-aware instrumental-variable regression.
//!
//! Two-stage estimation of sparse causal effects of graph-structured
//! exposures: a per-exposure LASSO on the instruments, then a
//! graph-constrained LASSO of the outcome on the fitted exposures (IVGL), and
//! an alternating variant that also estimates direct instrument effects
//! (IVGL-S). Simulation designs and selection metrics live alongside.

pub mod error;
pub mod graph;
pub mod invalid_iv;
pub mod metrics;
pub mod simulate;
pub mod solver;
pub mod two_stage;

pub use error::{Error, Result};
