//! IVGL-S: joint estimation of exposure effects `β` and direct instrument
//! effects `α` by alternating penalised regressions.
//!
//! The joint objective is
//!
//! ```text
//! ½ ‖P_Z (Y − Xβ − Zα)‖² + λ₁‖β‖₁ + λ₂ βᵀLβ + λ₃‖α‖₁
//! ```
//!
//! and is reported through [`ivgls_objective`] with an explicit projector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::solver::{graph_lasso, lasso_cd, CvDesign};
use crate::two_stage::{
    nonzero, stage1_fit_on, Dataset, ExposureDesign, FitConfig, FitResult, Method, Penalties,
    Stage1Fit,
};

/// Orthonormal basis of the column space of `Z`.
#[derive(Debug, Clone)]
pub struct Projector {
    basis: DMatrix<f64>,
}

impl Projector {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `P_Z v` computed as `U (Uᵀ v)`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.rank() == 0 {
            return DVector::zeros(v.len());
        }
        &self.basis * self.basis.tr_mul(v)
    }

    /// Dense `n × n` projector.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// Singular-value based projector with rank cutoff `σᵢ > 1e-10 σ_max`.
pub fn projector(z: &DMatrix<f64>) -> Result<Projector> {
    let n = z.nrows();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("Z contains non-finite values".into()));
    }
    if z.ncols() == 0 || z.iter().all(|v| *v == 0.0) {
        return Ok(Projector { basis: DMatrix::zeros(n, 0) });
    }
    let svd = z.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-10 * smax).collect();
    Ok(Projector { basis: u.select_columns(keep.iter()) })
}

/// Value of the joint objective at `(β, α)`, with `ds.x` as the exposure matrix.
pub fn ivgls_objective(
    ds: &Dataset,
    proj: &Projector,
    lap: &Laplacian,
    beta: &DVector<f64>,
    alpha: &DVector<f64>,
    pen: Penalties,
) -> Result<f64> {
    if beta.len() != ds.p() || alpha.len() != ds.q() || lap.p() != ds.p() {
        return Err(Error::DimensionMismatch(format!(
            "expected β of length {}, α of length {} and a {}-node Laplacian",
            ds.p(),
            ds.q(),
            ds.p()
        )));
    }
    if proj.basis.nrows() != ds.n() {
        return Err(Error::DimensionMismatch("projector was built for a different n".into()));
    }
    let r = &ds.y - &ds.x * beta - &ds.z * alpha;
    let pr = proj.apply(&r);
    Ok(0.5 * pr.norm_squared()
        + pen.lambda1 * beta.abs().sum()
        + pen.lambda2 * lap.quad_form(beta)
        + pen.lambda3 * alpha.abs().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternatingState {
    pub beta: DVector<f64>,
    pub alpha: DVector<f64>,
    pub iteration: usize,
    pub delta: f64,
    pub converged: bool,
}

/// Max absolute change of the stacked `(β, α)` relative to `max(1, ‖previous‖∞)`.
fn relative_change(
    beta: &DVector<f64>,
    alpha: &DVector<f64>,
    prev_beta: &DVector<f64>,
    prev_alpha: &DVector<f64>,
) -> f64 {
    let scale = prev_beta.amax().max(prev_alpha.amax()).max(1.0);
    let db = (beta - prev_beta).amax();
    let da = (alpha - prev_alpha).amax();
    db.max(da) / scale
}

/// Alternation given a precomputed instrument design and first stage. The
/// result also carries every iterate's joint objective in `objective_trace`.
pub fn ivgls_fit_with_stage1(
    ds: &Dataset,
    lap: &Laplacian,
    z_design: &CvDesign,
    stage1: &Stage1Fit,
    cfg: &FitConfig,
) -> Result<(FitResult, Vec<AlternatingState>)> {
    ds.validate()?;
    if ds.q() == 0 {
        return Err(Error::InvalidInput("IVGL-S requires instruments".into()));
    }
    if lap.p() != ds.p() {
        return Err(Error::DimensionMismatch("Laplacian and exposures disagree on p".into()));
    }
    if cfg.max_alt_iters == 0 {
        return Err(Error::InvalidInput("max_alt_iters must be at least 1".into()));
    }
    let exposures = match cfg.exposure_design {
        ExposureDesign::Fitted => &stage1.x_hat,
        ExposureDesign::Raw => &ds.x,
    };
    let n = ds.n() as f64;
    let (p, q) = (ds.p(), ds.q());
    let x_design = match cfg.fixed_penalties {
        None => Some(CvDesign::new(exposures, &cfg.solver)?),
        Some(_) => None,
    };
    let proj = projector(&ds.z)?;
    let report_ds = Dataset { x: exposures.clone(), ..ds.clone() };

    let mut beta = DVector::zeros(p);
    let mut alpha = DVector::zeros(q);
    let mut lambdas = (0.0, 0.0, 0.0);
    let mut states = Vec::new();
    let mut trace = Vec::new();
    let mut all_converged = true;

    for iteration in 1..=cfg.max_alt_iters {
        let r_alpha = &ds.y - exposures * &beta;
        let new_alpha = match (&cfg.fixed_penalties, &x_design) {
            (Some(pen), _) => {
                let fit = lasso_cd(&ds.z, &r_alpha, pen.lambda3 / n, &cfg.solver)?;
                all_converged &= fit.converged;
                lambdas.2 = pen.lambda3;
                fit.beta
            }
            (None, _) => {
                let cv = z_design.cv_lasso(&r_alpha, &cfg.solver)?;
                all_converged &= cv.fit.converged;
                lambdas.2 = cv.lambda1;
                cv.fit.beta
            }
        };

        let r_beta = &ds.y - &ds.z * &new_alpha;
        let new_beta = match (&cfg.fixed_penalties, &x_design) {
            (Some(pen), _) => {
                let fit =
                    graph_lasso(exposures, &r_beta, lap, pen.lambda1 / n, pen.lambda2 / n, &cfg.solver)?;
                all_converged &= fit.converged;
                lambdas.0 = pen.lambda1;
                lambdas.1 = pen.lambda2;
                fit.beta
            }
            (None, Some(design)) => {
                let cv = design.cv_graph_lasso(&r_beta, lap, &cfg.lambda2_grid, &cfg.solver)?;
                all_converged &= cv.fit.converged;
                lambdas.0 = cv.lambda1;
                lambdas.1 = cv.lambda2;
                cv.fit.beta
            }
            (None, None) => unreachable!("CV mode always builds an exposure design"),
        };

        let delta = relative_change(&new_beta, &new_alpha, &beta, &alpha);
        beta = new_beta;
        alpha = new_alpha;
        let pen = reporting_penalties(cfg, lambdas, n);
        trace.push(ivgls_objective(&report_ds, &proj, lap, &beta, &alpha, pen)?);
        let converged = delta < cfg.alt_tol;
        states.push(AlternatingState {
            beta: beta.clone(),
            alpha: alpha.clone(),
            iteration,
            delta,
            converged,
        });
        if converged {
            break;
        }
    }

    let last = states.last().expect("at least one alternation");
    let result = FitResult {
        method: Method::IvglS,
        support: nonzero(&beta),
        lambda1: lambdas.0,
        lambda2: Some(lambdas.1),
        lambda3: Some(lambdas.2),
        objective: *trace.last().expect("trace has one entry per alternation"),
        objective_trace: trace,
        converged: last.converged && all_converged,
        iterations: Some(last.iteration),
        beta,
        alpha: Some(alpha),
    };
    Ok((result, states))
}

/// Penalties on the joint-objective scale: fixed ones as given, CV-selected
/// ones (which live on the `(2n)⁻¹` loss scale) multiplied by `n`.
fn reporting_penalties(cfg: &FitConfig, lambdas: (f64, f64, f64), n: f64) -> Penalties {
    match cfg.fixed_penalties {
        Some(p) => p,
        None => Penalties { lambda1: n * lambdas.0, lambda2: n * lambdas.1, lambda3: n * lambdas.2 },
    }
}

pub fn ivgls_fit(ds: &Dataset, lap: &Laplacian, cfg: &FitConfig) -> Result<FitResult> {
    ds.validate()?;
    if ds.q() == 0 {
        return Err(Error::InvalidInput("IVGL-S requires instruments".into()));
    }
    let z_design = CvDesign::new(&ds.z, &cfg.solver)?;
    let stage1 = stage1_fit_on(&z_design, &ds.z, &ds.x, &cfg.solver)?;
    Ok(ivgls_fit_with_stage1(ds, lap, &z_design, &stage1, cfg)?.0)
}
