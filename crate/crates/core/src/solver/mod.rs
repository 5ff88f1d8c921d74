//! Coordinate-descent solvers for the LASSO and the graph-constrained LASSO.
//!
//! Every solver here minimises
//!
//! ```text
//! (2 n)⁻¹ ‖y − Xβ‖² + λ₁ ‖β‖₁ + λ₂ βᵀLβ
//! ```
//!
//! The graph term is folded into the least-squares loss by stacking
//! `√(2 n λ₂) S` under `X` (with `SᵀS = L`) while keeping the original `n`
//! in the loss denominator, so both problems share one kernel.

mod cd;
mod cv;

pub use cd::{
    augment, graph_lasso, graph_lasso_objective, lasso_cd, lasso_cd_scaled, lasso_objective,
    soft_threshold, LassoFit,
};
pub use cv::{cv_graph_lasso, cv_lasso, log_grid, CvDesign, CvFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default outer grid for the graph penalty.
pub const DEFAULT_LAMBDA2_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    /// Relative objective change below which a sweep sequence may stop.
    pub tol: f64,
    /// Largest subgradient residual accepted at convergence.
    pub kkt_tol: f64,
    /// Scale columns to unit sample standard deviation inside the CV layer.
    pub standardize: bool,
    /// Report the intercept implied by centring. Centring itself always happens
    /// inside the CV layer.
    pub intercept: bool,
    pub lambda_grid_size: usize,
    pub lambda_min_ratio: f64,
    /// Explicit λ₁ grid (standardised scale); overrides the log-spaced grid.
    pub lambda_grid: Option<Vec<f64>>,
    /// A path stops early once its training fit explains more than this share
    /// of the response variance; 1 disables the rule.
    pub path_dev_max: f64,
    pub cv_folds: usize,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            tol: 1e-8,
            kkt_tol: 1e-7,
            standardize: true,
            intercept: false,
            lambda_grid_size: 100,
            lambda_min_ratio: 1e-3,
            lambda_grid: None,
            path_dev_max: 0.999,
            cv_folds: 10,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::InvalidInput("kkt_tol must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidInput("max_sweeps must be at least 1".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidInput("cv_folds must be at least 2".into()));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::InvalidInput("lambda_min_ratio must lie in (0, 1)".into()));
        }
        if !(self.path_dev_max > 0.0 && self.path_dev_max <= 1.0) {
            return Err(Error::InvalidInput("path_dev_max must lie in (0, 1]".into()));
        }
        if self.lambda_grid_size == 0 {
            return Err(Error::InvalidInput("lambda_grid_size must be at least 1".into()));
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() || grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
                return Err(Error::InvalidInput("explicit lambda grid must be nonnegative".into()));
            }
        }
        Ok(())
    }
}
