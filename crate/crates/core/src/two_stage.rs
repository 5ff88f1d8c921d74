//! The two-stage pipeline: per-exposure LASSO on the instruments, then a
//! (graph-constrained) LASSO of the outcome on the fitted exposures.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::graph::Laplacian;
use crate::solver::{CvDesign, CvFit, SolverConfig, DEFAULT_LAMBDA2_GRID};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    /// `n × 0` when no instruments are available.
    pub z: DMatrix<f64>,
    pub node_names: Option<Vec<String>>,
    pub instrument_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let ds = Self { y, x, z, node_names: None, instrument_names: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn without_instruments(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, x, DMatrix::zeros(n, 0))
    }

    pub fn with_names(mut self, nodes: Vec<String>, instruments: Vec<String>) -> Result<Self> {
        if nodes.len() != self.p() || instruments.len() != self.q() {
            return Err(Error::DimensionMismatch("name lists must match column counts".into()));
        }
        self.node_names = Some(nodes);
        self.instrument_names = Some(instruments);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.nrows() != n || self.z.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "row counts differ: y has {n}, X has {}, Z has {}",
                self.x.nrows(),
                self.z.nrows()
            )));
        }
        ensure_finite("Y", self.y.iter())?;
        ensure_finite("X", self.x.iter())?;
        ensure_finite("Z", self.z.iter())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    pub fn node_name(&self, j: usize) -> String {
        self.node_names.as_ref().map_or_else(|| format!("x{}", j + 1), |v| v[j].clone())
    }

    pub fn instrument_name(&self, l: usize) -> String {
        self.instrument_names.as_ref().map_or_else(|| format!("z{}", l + 1), |v| v[l].clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GL")]
    Gl,
    #[serde(rename = "IVL")]
    Ivl,
    #[serde(rename = "IVGL")]
    Ivgl,
    #[serde(rename = "IVGL-S")]
    IvglS,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Gl, Method::Ivl, Method::Ivgl, Method::IvglS];

    pub fn needs_instruments(self) -> bool {
        self != Method::Gl
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gl => "GL",
            Method::Ivl => "IVL",
            Method::Ivgl => "IVGL",
            Method::IvglS => "IVGL-S",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gl" => Ok(Method::Gl),
            "ivl" => Ok(Method::Ivl),
            "ivgl" => Ok(Method::Ivgl),
            "ivgls" | "ivgl-s" => Ok(Method::IvglS),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

/// Which exposure matrix the outcome regressions of IVGL-S use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExposureDesign {
    /// Stage-1 fitted exposures `X̂ = Z Â`.
    Fitted,
    /// The observed exposures `X`.
    Raw,
}

/// Fixed penalties on the `½‖·‖²` scale of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub solver: SolverConfig,
    pub lambda2_grid: Vec<f64>,
    pub max_alt_iters: usize,
    pub alt_tol: f64,
    pub exposure_design: ExposureDesign,
    /// When set, IVGL-S alternates with these penalties instead of re-running CV.
    pub fixed_penalties: Option<Penalties>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            lambda2_grid: DEFAULT_LAMBDA2_GRID.to_vec(),
            max_alt_iters: 30,
            alt_tol: 1e-6,
            exposure_design: ExposureDesign::Fitted,
            fixed_penalties: None,
        }
    }
}

impl FitConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.solver.rng_seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Fit {
    /// `q × p`; column `j` holds the instrument coefficients for exposure `j`.
    pub a_hat: DMatrix<f64>,
    /// `n × p`, equal to `Z Â`.
    pub x_hat: DMatrix<f64>,
    pub per_column_lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    pub beta: DVector<f64>,
    pub alpha: Option<DVector<f64>>,
    pub lambda1: f64,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub support: Vec<usize>,
    pub objective_trace: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    /// Alternation count (IVGL-S only).
    pub iterations: Option<usize>,
}

impl FitResult {
    pub(crate) fn from_cv(method: Method, cv: CvFit, with_lambda2: bool) -> Self {
        let objective = *cv.fit.objective_trace.last().unwrap_or(&f64::NAN);
        Self {
            method,
            support: nonzero(&cv.fit.beta),
            beta: cv.fit.beta,
            alpha: None,
            lambda1: cv.lambda1,
            lambda2: with_lambda2.then_some(cv.lambda2),
            lambda3: None,
            objective_trace: cv.fit.objective_trace,
            objective,
            converged: cv.fit.converged,
            iterations: None,
        }
    }

    /// Instruments with a nonzero direct effect.
    pub fn invalid_instruments(&self) -> Vec<usize> {
        self.alpha.as_ref().map(nonzero).unwrap_or_default()
    }
}

pub(crate) fn nonzero(v: &DVector<f64>) -> Vec<usize> {
    v.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect()
}

/// First stage against a prebuilt instrument design. Never sees the outcome.
pub fn stage1_fit_on(
    z_design: &CvDesign,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<Stage1Fit> {
    if z.nrows() != x.nrows() || z_design.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Z has {} rows but X has {}",
            z.nrows(),
            x.nrows()
        )));
    }
    let p = x.ncols();
    let cols: Vec<CvFit> = (0..p)
        .into_par_iter()
        .map(|j| z_design.cv_lasso(&x.column(j).into_owned(), cfg))
        .collect::<Result<_>>()?;
    let mut a_hat = DMatrix::zeros(z.ncols(), p);
    let mut per_column_lambda = Vec::with_capacity(p);
    for (j, cv) in cols.into_iter().enumerate() {
        a_hat.set_column(j, &cv.fit.beta);
        per_column_lambda.push(cv.lambda1);
    }
    let x_hat = z * &a_hat;
    Ok(Stage1Fit { a_hat, x_hat, per_column_lambda })
}

/// Cross-validated LASSO of every exposure column on the instruments.
pub fn stage1_fit(z: &DMatrix<f64>, x: &DMatrix<f64>, cfg: &SolverConfig) -> Result<Stage1Fit> {
    ensure_finite("X", x.iter())?;
    let design = CvDesign::new(z, cfg)?;
    stage1_fit_on(&design, z, x, cfg)
}

fn require_instruments(ds: &Dataset) -> Result<()> {
    if ds.q() == 0 {
        return Err(Error::InvalidInput("this estimator requires instruments".into()));
    }
    Ok(())
}

/// Second stage of IVGL on precomputed fitted exposures.
pub fn ivgl_second_stage(
    x_hat: &DMatrix<f64>,
    y: &DVector<f64>,
    lap: &Laplacian,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let cv = CvDesign::new(x_hat, &cfg.solver)?.cv_graph_lasso(y, lap, &cfg.lambda2_grid, &cfg.solver)?;
    Ok(FitResult::from_cv(Method::Ivgl, cv, true))
}

/// Second stage of IVL (no graph penalty) on precomputed fitted exposures.
pub fn ivl_second_stage(x_hat: &DMatrix<f64>, y: &DVector<f64>, cfg: &FitConfig) -> Result<FitResult> {
    let cv = CvDesign::new(x_hat, &cfg.solver)?.cv_lasso(y, &cfg.solver)?;
    Ok(FitResult::from_cv(Method::Ivl, cv, false))
}

pub fn ivgl_fit(ds: &Dataset, lap: &Laplacian, cfg: &FitConfig) -> Result<FitResult> {
    ds.validate()?;
    require_instruments(ds)?;
    let s1 = stage1_fit(&ds.z, &ds.x, &cfg.solver)?;
    ivgl_second_stage(&s1.x_hat, &ds.y, lap, cfg)
}

pub fn ivl_fit(ds: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    ds.validate()?;
    require_instruments(ds)?;
    let s1 = stage1_fit(&ds.z, &ds.x, &cfg.solver)?;
    ivl_second_stage(&s1.x_hat, &ds.y, cfg)
}

/// Graph-constrained LASSO on the observed exposures, ignoring instruments.
pub fn gl_fit(ds: &Dataset, lap: &Laplacian, cfg: &FitConfig) -> Result<FitResult> {
    ds.validate()?;
    let cv = CvDesign::new(&ds.x, &cfg.solver)?.cv_graph_lasso(&ds.y, lap, &cfg.lambda2_grid, &cfg.solver)?;
    Ok(FitResult::from_cv(Method::Gl, cv, true))
}

/// Absolute Pearson correlation of each instrument with the per-subject
/// average of the exposure columns; zero for constant instruments.
pub fn sis_scores(z: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if z.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Z has {} rows but X has {}",
            z.nrows(),
            x.nrows()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidInput("X has no columns".into()));
    }
    ensure_finite("Z", z.iter())?;
    ensure_finite("X", x.iter())?;
    let n = x.nrows() as f64;
    let mut avg: DVector<f64> = x.column_mean();
    avg.add_scalar_mut(-avg.sum() / n);
    let avg_ss = avg.norm_squared();
    Ok(z.column_iter()
        .map(|col| {
            let mean = col.sum() / n;
            let (mut num, mut ss) = (0.0, 0.0);
            for (v, a) in col.iter().zip(avg.iter()) {
                num += (v - mean) * a;
                ss += (v - mean) * (v - mean);
            }
            if ss == 0.0 || avg_ss == 0.0 {
                0.0
            } else {
                (num / (ss * avg_ss).sqrt()).abs().min(1.0)
            }
        })
        .collect())
}

/// Top-`k` instruments by [`sis_scores`], ties broken by ascending index.
pub fn sis_screen(z: &DMatrix<f64>, x: &DMatrix<f64>, k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 || k > z.ncols() {
        return Err(Error::InvalidInput(format!(
            "k must lie in 1..={}, got {k}",
            z.ncols()
        )));
    }
    let scores = sis_scores(z, x)?;
    let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}
