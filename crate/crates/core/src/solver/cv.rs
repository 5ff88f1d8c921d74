//! K-fold cross-validation over λ₁ (and an outer λ₂ grid).
//!
//! A [`CvDesign`] holds the centred, optionally standardised training blocks
//! and Gram matrices for one design matrix, so that many responses can be
//! cross-validated against the same design with identical folds.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cd::{coordinate_descent, CdOutcome, LassoFit, Quadratic};
use super::SolverConfig;
use crate::error::{ensure_finite, Error, Result};
use crate::graph::Laplacian;

/// Besides the `path_dev_max` cap, paths stop once the training fit improves
/// by less than this fraction between grid points.
const PATH_DEV_CHANGE: f64 = 1e-5;
/// The fractional-change rule only applies after this many grid points.
const PATH_MIN_POINTS: usize = 5;

/// Warm-started path over a descending grid, calling `visit` after each fit.
/// Returns the number of grid points fitted; later points are skipped once
/// the fit has saturated.
fn run_path(
    prob: &Quadratic<'_>,
    grid: &[f64],
    beta: &mut DVector<f64>,
    cfg: &SolverConfig,
    mut visit: impl FnMut(&DVector<f64>, &CdOutcome),
) -> usize {
    let mut prev_dev = 0.0;
    for (k, &l1) in grid.iter().enumerate() {
        let out = coordinate_descent(prob, l1, beta, cfg);
        visit(beta, &out);
        if prob.yty <= 0.0 {
            return k + 1;
        }
        let loss = out.trace.last().copied().unwrap_or(0.5 * prob.yty) - l1 * beta.abs().sum();
        let dev = 1.0 - 2.0 * loss / prob.yty;
        if dev > cfg.path_dev_max || (k >= PATH_MIN_POINTS && dev - prev_dev < PATH_DEV_CHANGE * dev) {
            return k + 1;
        }
        prev_dev = dev;
    }
    grid.len()
}

/// Log-spaced grid from `lambda_max` down to `ratio · lambda_max`.
pub fn log_grid(lambda_max: f64, ratio: f64, size: usize) -> Vec<f64> {
    if size == 1 || lambda_max == 0.0 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..size)
        .map(|k| (hi + (lo - hi) * k as f64 / (size - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvFit {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Refit on all rows; `beta` is on the original column scale.
    pub fit: LassoFit,
    pub lambda1_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
    /// Mean held-out squared error, indexed `[λ₂][λ₁]`.
    pub cv_error: Vec<Vec<f64>>,
}

struct Block {
    test: Vec<usize>,
    n_train: usize,
    train_mask: Vec<bool>,
    mean: DVector<f64>,
    scale: DVector<f64>,
    /// Centred, scaled training rows.
    xs: DMatrix<f64>,
    /// Held-out rows transformed with the training statistics.
    xtest: DMatrix<f64>,
    gram: DMatrix<f64>,
}

struct Target {
    ybar: f64,
    xty: DVector<f64>,
    yty: f64,
}

impl Block {
    fn new(x: &DMatrix<f64>, train_mask: Vec<bool>, standardize: bool) -> Self {
        let m = x.ncols();
        let train: Vec<usize> = (0..x.nrows()).filter(|&i| train_mask[i]).collect();
        let test: Vec<usize> = (0..x.nrows()).filter(|&i| !train_mask[i]).collect();
        let nt = train.len();
        let xtr = x.select_rows(train.iter());
        let mean = DVector::from_iterator(m, xtr.column_iter().map(|c| c.sum() / nt as f64));
        let mut scale = DVector::from_element(m, 1.0);
        let mut xs = xtr;
        for j in 0..m {
            let mut col = xs.column_mut(j);
            col.add_scalar_mut(-mean[j]);
            let ss = col.norm_squared();
            if ss == 0.0 {
                scale[j] = 0.0;
            } else if standardize {
                scale[j] = (ss / (nt as f64 - 1.0).max(1.0)).sqrt();
            }
            if scale[j] == 0.0 {
                col.fill(0.0);
            } else {
                col.unscale_mut(scale[j]);
            }
        }
        let mut xtest = x.select_rows(test.iter());
        for j in 0..m {
            let mut col = xtest.column_mut(j);
            if scale[j] == 0.0 {
                col.fill(0.0);
            } else {
                col.add_scalar_mut(-mean[j]);
                col.unscale_mut(scale[j]);
            }
        }
        let gram = xs.tr_mul(&xs) / nt as f64;
        Self { test, n_train: nt, train_mask, mean, scale, xs, xtest, gram }
    }

    fn target(&self, y: &DVector<f64>) -> Target {
        let ytr: Vec<f64> =
            y.iter().zip(&self.train_mask).filter(|(_, t)| **t).map(|(v, _)| *v).collect();
        let nt = self.n_train as f64;
        let ybar = ytr.iter().sum::<f64>() / nt;
        let yc = DVector::from_iterator(ytr.len(), ytr.iter().map(|v| v - ybar));
        let xty = self.xs.tr_mul(&yc) / nt;
        Target { ybar, xty, yty: yc.norm_squared() / nt }
    }

    /// Gram matrix of the training rows stacked with the scaled graph rows.
    fn penalized_gram(&self, lap: Option<&Laplacian>, lambda2: f64) -> Cow<'_, DMatrix<f64>> {
        match lap {
            Some(l) if lambda2 > 0.0 => {
                let m = self.gram.nrows();
                let lm = l.matrix();
                let mut g = self.gram.clone();
                for k in 0..m {
                    for j in 0..m {
                        let (sj, sk) = (self.scale[j], self.scale[k]);
                        if sj > 0.0 && sk > 0.0 && lm[(j, k)] != 0.0 {
                            g[(j, k)] += 2.0 * lambda2 * lm[(j, k)] / (sj * sk);
                        }
                    }
                }
                Cow::Owned(g)
            }
            _ => Cow::Borrowed(&self.gram),
        }
    }

    /// Held-out squared error summed over the test rows.
    fn test_sse(&self, y: &DVector<f64>, ybar: f64, beta: &DVector<f64>) -> f64 {
        let mut pred = DVector::from_element(self.test.len(), ybar);
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                pred.axpy(b, &self.xtest.column(j), 1.0);
            }
        }
        self.test.iter().zip(pred.iter()).map(|(&i, p)| (y[i] - p).powi(2)).sum()
    }
}

/// Precomputed folds for one design matrix.
pub struct CvDesign {
    n: usize,
    m: usize,
    folds: Vec<Block>,
    full: Block,
    fold_of: Vec<usize>,
}

impl CvDesign {
    pub fn new(x: &DMatrix<f64>, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        ensure_finite("design", x.iter())?;
        let n = x.nrows();
        let k = cfg.cv_folds;
        if n < k {
            return Err(Error::InvalidInput(format!(
                "cross-validation needs at least {k} rows, got {n}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.rng_seed));
        let mut fold_of = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            fold_of[i] = pos % k;
        }
        let folds = (0..k)
            .into_par_iter()
            .map(|f| Block::new(x, fold_of.iter().map(|&g| g != f).collect(), cfg.standardize))
            .collect();
        let full = Block::new(x, vec![true; n], cfg.standardize);
        Ok(Self { n, m: x.ncols(), folds, full, fold_of })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.m
    }

    /// Fold index of every row.
    pub fn fold_assignment(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn cv_lasso(&self, y: &DVector<f64>, cfg: &SolverConfig) -> Result<CvFit> {
        self.cross_validate(y, None, &[0.0], cfg)
    }

    pub fn cv_graph_lasso(
        &self,
        y: &DVector<f64>,
        lap: &Laplacian,
        lambda2_grid: &[f64],
        cfg: &SolverConfig,
    ) -> Result<CvFit> {
        if lap.p() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "Laplacian has {} nodes but design has {} columns",
                lap.p(),
                self.m
            )));
        }
        if lambda2_grid.is_empty() || lambda2_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput("lambda2 grid must be nonempty and nonnegative".into()));
        }
        self.cross_validate(y, Some(lap), lambda2_grid, cfg)
    }

    fn cross_validate(
        &self,
        y: &DVector<f64>,
        lap: Option<&Laplacian>,
        lambda2_grid: &[f64],
        cfg: &SolverConfig,
    ) -> Result<CvFit> {
        cfg.validate()?;
        if y.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but response has {}",
                self.n,
                y.len()
            )));
        }
        ensure_finite("response", y.iter())?;

        let full_target = self.full.target(y);
        let grid = match &cfg.lambda_grid {
            Some(g) => {
                let mut g = g.clone();
                g.sort_by(|a, b| b.total_cmp(a));
                g
            }
            None => log_grid(full_target.xty.amax(), cfg.lambda_min_ratio, cfg.lambda_grid_size),
        };

        let mut cv_error = Vec::with_capacity(lambda2_grid.len());
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for (i2, &lambda2) in lambda2_grid.iter().enumerate() {
            let fold_sse: Vec<Vec<f64>> = self
                .folds
                .par_iter()
                .map(|block| {
                    let target = block.target(y);
                    let gram = block.penalized_gram(lap, lambda2);
                    let prob = Quadratic { gram: &gram, xty: &target.xty, yty: target.yty };
                    let mut beta = DVector::zeros(self.m);
                    let mut sse = Vec::with_capacity(grid.len());
                    run_path(&prob, &grid, &mut beta, cfg, |beta, _| {
                        sse.push(block.test_sse(y, target.ybar, beta));
                    });
                    sse
                })
                .collect();
            let usable = fold_sse.iter().map(Vec::len).min().unwrap_or(0);
            let errs: Vec<f64> = (0..usable)
                .map(|k| fold_sse.iter().map(|f| f[k]).sum::<f64>() / self.n as f64)
                .collect();
            for (k, &e) in errs.iter().enumerate() {
                if e < best.0 {
                    best = (e, i2, k);
                }
            }
            cv_error.push(errs);
        }

        let (_, i2, k) = best;
        let lambda2 = lambda2_grid[i2];
        let gram = self.full.penalized_gram(lap, lambda2);
        let prob = Quadratic { gram: &gram, xty: &full_target.xty, yty: full_target.yty };
        let mut beta = DVector::zeros(self.m);
        let mut out = None;
        for &l1 in &grid[..=k] {
            out = Some(coordinate_descent(&prob, l1, &mut beta, cfg));
        }
        let out = out.expect("grid is nonempty");

        let full = &self.full;
        let beta_orig = DVector::from_iterator(
            self.m,
            (0..self.m).map(|j| if full.scale[j] > 0.0 { beta[j] / full.scale[j] } else { 0.0 }),
        );
        let intercept = cfg.intercept.then(|| full_target.ybar - full.mean.dot(&beta_orig));
        Ok(CvFit {
            lambda1: grid[k],
            lambda2,
            fit: LassoFit {
                beta: beta_orig,
                lambda: grid[k],
                objective_trace: out.trace,
                n_sweeps: out.sweeps,
                kkt_violation: out.kkt,
                converged: out.converged,
                intercept,
            },
            lambda1_grid: grid,
            lambda2_grid: lambda2_grid.to_vec(),
            cv_error,
        })
    }
}

/// K-fold cross-validated LASSO over a log-spaced λ grid.
pub fn cv_lasso(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &SolverConfig) -> Result<CvFit> {
    CvDesign::new(x, cfg)?.cv_lasso(y, cfg)
}

/// Cross-validated graph-constrained LASSO over (λ₁, λ₂).
pub fn cv_graph_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lap: &Laplacian,
    lambda2_grid: &[f64],
    cfg: &SolverConfig,
) -> Result<CvFit> {
    CvDesign::new(x, cfg)?.cv_graph_lasso(y, lap, lambda2_grid, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_log_spaced_and_descending() {
        let g = log_grid(2.0, 1e-3, 4);
        assert_eq!(g.len(), 4);
        assert!((g[0] - 2.0).abs() < 1e-12);
        assert!((g[3] - 2e-3).abs() < 1e-12);
        assert!((g[1] / g[0] - g[2] / g[1]).abs() < 1e-12);
        assert_eq!(log_grid(2.0, 1e-3, 1), vec![2.0]);
    }

    #[test]
    fn too_few_rows_for_folds() {
        let x = DMatrix::from_element(5, 2, 1.0);
        let cfg = SolverConfig::default();
        assert!(matches!(CvDesign::new(&x, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn folds_cover_rows_evenly() {
        let x = DMatrix::from_fn(23, 2, |i, j| (i * 3 + j) as f64);
        let cfg = SolverConfig { cv_folds: 5, ..Default::default() };
        let d = CvDesign::new(&x, &cfg).unwrap();
        let mut counts = [0; 5];
        for &f in d.fold_assignment() {
            counts[f] += 1;
        }
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
        let d2 = CvDesign::new(&x, &cfg).unwrap();
        assert_eq!(d.fold_assignment(), d2.fold_assignment());
    }
}
