use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SolverConfig;
use crate::error::{ensure_finite, Error, Result};
use crate::graph::Laplacian;

/// `sign(z) · max(|z| − gamma, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    /// Objective after each sweep; the first entry is the starting point.
    pub objective_trace: Vec<f64>,
    pub n_sweeps: usize,
    /// Largest subgradient residual of the problem actually solved.
    pub kkt_violation: f64,
    pub converged: bool,
    pub intercept: Option<f64>,
}

impl LassoFit {
    pub fn support(&self) -> Vec<usize> {
        self.beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect()
    }
}

/// Quadratic form of a least-squares loss with everything divided by the loss
/// denominator: `½ yty − xtyᵀβ + ½ βᵀ gram β`.
pub(crate) struct Quadratic<'a> {
    pub gram: &'a DMatrix<f64>,
    pub xty: &'a DVector<f64>,
    pub yty: f64,
}

pub(crate) struct CdOutcome {
    pub trace: Vec<f64>,
    pub sweeps: usize,
    pub kkt: f64,
    pub converged: bool,
}

impl Quadratic<'_> {
    /// `xty − gram·β`, touching only nonzero coordinates.
    fn residual_correlation(&self, beta: &DVector<f64>) -> Vec<f64> {
        let m = self.xty.len();
        let h = self.gram.as_slice();
        let mut g: Vec<f64> = self.xty.iter().copied().collect();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                let col = &h[j * m..(j + 1) * m];
                for (gi, hij) in g.iter_mut().zip(col) {
                    *gi -= hij * b;
                }
            }
        }
        g
    }
}

fn kkt_residual(g: f64, beta: f64, lambda: f64) -> f64 {
    if beta > 0.0 {
        (g - lambda).abs()
    } else if beta < 0.0 {
        (g + lambda).abs()
    } else {
        (g.abs() - lambda).max(0.0)
    }
}

/// Active coordinates with a contiguous copy of their Gram block, so that
/// sweeps touch dense memory only.
struct ActiveBlock {
    idx: Vec<usize>,
    gram: Vec<f64>,
    diag: Vec<f64>,
    g: Vec<f64>,
    beta: Vec<f64>,
    xty: Vec<f64>,
}

impl ActiveBlock {
    fn new(prob: &Quadratic<'_>, idx: Vec<usize>, g: &[f64], beta: &DVector<f64>) -> Self {
        let m = prob.xty.len();
        let h = prob.gram.as_slice();
        let k = idx.len();
        let mut gram = Vec::with_capacity(k * k);
        for &j in &idx {
            let col = &h[j * m..(j + 1) * m];
            gram.extend(idx.iter().map(|&a| col[a]));
        }
        let diag = (0..k).map(|i| gram[i * k + i]).collect();
        Self {
            g: idx.iter().map(|&a| g[a]).collect(),
            beta: idx.iter().map(|&a| beta[a]).collect(),
            xty: idx.iter().map(|&a| prob.xty[a]).collect(),
            idx,
            gram,
            diag,
        }
    }

    fn len(&self) -> usize {
        self.idx.len()
    }

    fn sweep(&mut self, lambda: f64) {
        let k = self.len();
        for i in 0..k {
            let hii = self.diag[i];
            if hii <= 0.0 {
                continue;
            }
            let old = self.beta[i];
            let new = soft_threshold(self.g[i] + hii * old, lambda) / hii;
            if new != old {
                self.shift(i, new - old);
            }
        }
    }

    fn shift(&mut self, i: usize, delta: f64) {
        let k = self.len();
        self.beta[i] += delta;
        let col = &self.gram[i * k..(i + 1) * k];
        for (ga, ha) in self.g.iter_mut().zip(col) {
            *ga -= ha * delta;
        }
    }

    /// Objective up to the constant `½ yty`, and the largest KKT residual.
    fn objective_and_kkt(&self, lambda: f64) -> (f64, f64) {
        let mut obj = 0.0;
        let mut kkt = 0.0f64;
        for i in 0..self.len() {
            let b = self.beta[i];
            obj += lambda * b.abs() - 0.5 * (self.xty[i] + self.g[i]) * b;
            kkt = kkt.max(kkt_residual(self.g[i], b, lambda));
        }
        (obj, kkt)
    }

    /// Newton step on the current orthant face: solves the stationarity
    /// equations for the nonzero coordinates with their signs held fixed and
    /// moves towards that point until the first coordinate would change sign.
    /// The objective is convex along the segment, so the step never increases
    /// it; a step that fails to decrease it in floating point is rolled back.
    /// Returns whether the full step was taken.
    fn polish(&mut self, face: &[usize], lambda: f64) -> bool {
        let k = self.len();
        let f = face.len();
        if f == 0 {
            return false;
        }
        let hs = DMatrix::from_fn(f, f, |a, b| self.gram[face[b] * k + face[a]]);
        let rhs = DVector::from_iterator(
            f,
            face.iter().map(|&i| self.xty[i] - lambda * self.beta[i].signum()),
        );
        let Some(chol) = hs.cholesky() else { return false };
        let target = chol.solve(&rhs);
        if target.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let mut t = 1.0f64;
        let mut blocking = None;
        for (a, &i) in face.iter().enumerate() {
            let (b, x) = (self.beta[i], target[a]);
            if b * x <= 0.0 {
                let ta = b / (b - x);
                if ta < t {
                    t = ta;
                    blocking = Some(a);
                }
            }
        }
        if t <= 0.0 {
            return false;
        }
        let before = self.objective_and_kkt(lambda).0;
        let saved = (self.beta.clone(), self.g.clone());
        for (a, &i) in face.iter().enumerate() {
            let b = self.beta[i];
            let new = if Some(a) == blocking { 0.0 } else { b + t * (target[a] - b) };
            if new != b {
                self.shift(i, new - b);
            }
        }
        if self.objective_and_kkt(lambda).0 > before {
            (self.beta, self.g) = saved;
            return false;
        }
        blocking.is_none()
    }
}

/// Cyclic coordinate descent with an active set, warm-started from `beta`.
///
/// Sweeps run over the active set (ascending index) while the gradient is
/// tracked on active coordinates only; the full gradient is refreshed between
/// sweep sequences to admit KKT violators. Once the sign pattern settles, an
/// exact Newton step on that pattern is tried.
pub(crate) fn coordinate_descent(
    prob: &Quadratic<'_>,
    lambda: f64,
    beta: &mut DVector<f64>,
    cfg: &SolverConfig,
) -> CdOutcome {
    let m = prob.xty.len();
    let h = prob.gram.as_slice();

    let mut g = prob.residual_correlation(beta);
    let start: f64 = beta
        .iter()
        .zip(&g)
        .zip(prob.xty.iter())
        .filter(|((b, _), _)| **b != 0.0)
        .map(|((b, gj), c)| lambda * b.abs() - 0.5 * (c + gj) * b)
        .sum();
    let mut trace = vec![0.5 * prob.yty + start];
    let mut sweeps = 0usize;
    let mut face = Vec::new();
    let mut pattern: Vec<(usize, bool)> = Vec::new();
    let mut last_pattern: Vec<(usize, bool)> = Vec::new();
    let mut next_polish = 3usize;
    let mut polish_backoff = 2usize;

    loop {
        let mut kkt = 0.0f64;
        let mut idx = Vec::new();
        for j in 0..m {
            kkt = kkt.max(kkt_residual(g[j], beta[j], lambda));
            // Zero coordinates that satisfy their optimality condition stay out.
            if beta[j] != 0.0 || (h[j * m + j] > 0.0 && g[j].abs() > lambda) {
                idx.push(j);
            }
        }
        if kkt <= cfg.kkt_tol {
            return CdOutcome { trace, sweeps, kkt, converged: true };
        }
        if sweeps >= cfg.max_sweeps {
            return CdOutcome { trace, sweeps, kkt, converged: false };
        }

        let mut block = ActiveBlock::new(prob, idx, &g, beta);
        loop {
            block.sweep(lambda);
            sweeps += 1;

            pattern.clear();
            pattern.extend(
                (0..block.len()).filter(|&i| block.beta[i] != 0.0).map(|i| (i, block.beta[i] > 0.0)),
            );
            if pattern == last_pattern && sweeps >= next_polish {
                face.clear();
                face.extend(pattern.iter().map(|&(i, _)| i));
                if block.polish(&face, lambda) {
                    polish_backoff = 2;
                } else {
                    polish_backoff *= 2;
                }
                next_polish = sweeps + polish_backoff;
            }
            std::mem::swap(&mut pattern, &mut last_pattern);

            let (obj, kkt_active) = block.objective_and_kkt(lambda);
            let obj = 0.5 * prob.yty + obj;
            let prev = *trace.last().expect("trace starts non-empty");
            trace.push(obj);
            let rel = (prev - obj).abs() / obj.abs().max(f64::MIN_POSITIVE);
            if (rel < cfg.tol && kkt_active <= cfg.kkt_tol) || sweeps >= cfg.max_sweeps {
                break;
            }
        }
        for (&j, &b) in block.idx.iter().zip(&block.beta) {
            beta[j] = b;
        }
        g = prob.residual_correlation(beta);
    }
}

fn check_xy(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.len()
        )));
    }
    ensure_finite("design", x.iter())?;
    ensure_finite("response", y.iter())
}

/// `(2·denominator)⁻¹ ‖y − Xβ‖² + λ‖β‖₁`, evaluated from the residual.
pub fn lasso_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    lambda: f64,
    denominator: f64,
) -> f64 {
    let r = y - x * beta;
    r.norm_squared() / (2.0 * denominator) + lambda * beta.abs().sum()
}

/// `(2n)⁻¹ ‖y − Xβ‖² + λ₁‖β‖₁ + λ₂ βᵀLβ`.
pub fn graph_lasso_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lap: &Laplacian,
    beta: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    lasso_objective(x, y, beta, lambda1, x.nrows() as f64) + lambda2 * lap.quad_form(beta)
}

/// LASSO with the loss divided by `2 · denominator` instead of `2 · nrows`.
pub fn lasso_cd_scaled(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    denominator: f64,
    cfg: &SolverConfig,
) -> Result<LassoFit> {
    check_xy(x, y)?;
    cfg.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
    }
    if !(denominator > 0.0) {
        return Err(Error::InvalidInput("loss denominator must be positive".into()));
    }
    let gram = x.tr_mul(x) / denominator;
    let xty = x.tr_mul(y) / denominator;
    let prob = Quadratic { gram: &gram, xty: &xty, yty: y.norm_squared() / denominator };
    let mut beta = DVector::zeros(x.ncols());
    let out = coordinate_descent(&prob, lambda, &mut beta, cfg);
    Ok(LassoFit {
        beta,
        lambda,
        objective_trace: out.trace,
        n_sweeps: out.sweeps,
        kkt_violation: out.kkt,
        converged: out.converged,
        intercept: None,
    })
}

/// Minimises `(2n)⁻¹ ‖y − Xβ‖² + λ‖β‖₁` on the data exactly as given.
pub fn lasso_cd(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<LassoFit> {
    lasso_cd_scaled(x, y, lambda, x.nrows() as f64, cfg)
}

/// Stacks `√(2 n λ₂) S` under `X` and `r` zeros under `y`.
pub fn augment(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lap: &Laplacian,
    lambda2: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if lap.p() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "Laplacian has {} nodes but design has {} columns",
            lap.p(),
            x.ncols()
        )));
    }
    if !(lambda2 >= 0.0) || !lambda2.is_finite() {
        return Err(Error::InvalidInput(format!("lambda2 must be nonnegative, got {lambda2}")));
    }
    let n = x.nrows();
    let rows = if lambda2 > 0.0 { lap.rank() } else { 0 };
    let mut xa = DMatrix::zeros(n + rows, x.ncols());
    xa.rows_mut(0, n).copy_from(x);
    if rows > 0 {
        let scale = (2.0 * n as f64 * lambda2).sqrt();
        xa.rows_mut(n, rows).copy_from(&(lap.sqrt_factor() * scale));
    }
    let mut ya = DVector::zeros(n + rows);
    ya.rows_mut(0, n).copy_from(y);
    Ok((xa, ya))
}

/// Graph-constrained LASSO solved on the augmented design. The objective trace
/// equals the original objective because the loss denominator stays `n`.
pub fn graph_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lap: &Laplacian,
    lambda1: f64,
    lambda2: f64,
    cfg: &SolverConfig,
) -> Result<LassoFit> {
    check_xy(x, y)?;
    let (xa, ya) = augment(x, y, lap, lambda2)?;
    lasso_cd_scaled(&xa, &ya, lambda1, x.nrows() as f64, cfg)
}
