//! Seeded data-generating processes and the Monte Carlo replication driver.
//!
//! Setup one draws all-valid instruments on a ring of exposures; setup two adds
//! sparse direct instrument effects and a random geometric exposure graph.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    build_distance_graph, build_ring, contiguous_cluster, laplacian, Graph, Laplacian,
    LaplacianKind,
};
use crate::invalid_iv::ivgls_fit_with_stage1;
use crate::metrics::{irrepresentability, mcc, mse, sign_recovery, SelectionOutcome};
use crate::solver::CvDesign;
use crate::two_stage::{
    gl_fit, ivgl_second_stage, ivl_second_stage, stage1_fit_on, Dataset, FitConfig, FitResult,
    Method, Stage1Fit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setup {
    /// All instruments valid, ring graph.
    One,
    /// Sparse invalid instruments, distance-threshold graph.
    Two,
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setup::One => "1",
            Setup::Two => "2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub setup: Setup,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub s0: usize,
    pub si: f64,
    pub n_invalid: usize,
    pub alpha_invalid_value: f64,
    pub first_stage_density: f64,
    pub gamma_range: (f64, f64),
    pub distance_threshold: f64,
    pub n_replicates: usize,
    pub base_seed: u64,
    /// Setup two only: draw node coordinates once from this seed instead of
    /// per replicate.
    pub fixed_graph_seed: Option<u64>,
}

impl SimConfig {
    pub fn setup1(si: f64, s0: usize) -> Self {
        Self {
            setup: Setup::One,
            n: 100,
            p: 70,
            q: 500,
            s0,
            si,
            n_invalid: 0,
            alpha_invalid_value: 5.0,
            first_stage_density: 0.10,
            gamma_range: (0.2, 0.7),
            distance_threshold: 30.0,
            n_replicates: 100,
            base_seed: 0,
            fixed_graph_seed: None,
        }
    }

    pub fn setup2(si: f64, s0: usize) -> Self {
        Self { setup: Setup::Two, n_invalid: 10, ..Self::setup1(si, s0) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.s0 > self.p {
            return bad(format!("s0 = {} exceeds p = {}", self.s0, self.p));
        }
        if self.n_invalid > self.q {
            return bad(format!("n_invalid = {} exceeds q = {}", self.n_invalid, self.q));
        }
        if !(self.first_stage_density > 0.0 && self.first_stage_density <= 1.0) {
            return bad("first_stage_density must lie in (0, 1]".into());
        }
        let (lo, hi) = self.gamma_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return bad("gamma_range must be an ordered finite interval".into());
        }
        if self.setup == Setup::One && self.p < 3 {
            return bad("setup one needs p ≥ 3 for the ring".into());
        }
        if !(self.si.is_finite()) {
            return bad("si must be finite".into());
        }
        if !(self.distance_threshold > 0.0) {
            return bad("distance_threshold must be positive".into());
        }
        if self.n == 0 || self.p == 0 || self.q == 0 {
            return bad("n, p and q must be positive".into());
        }
        Ok(())
    }

    pub fn laplacian_kind(&self) -> LaplacianKind {
        match self.setup {
            Setup::One => LaplacianKind::Normalized,
            Setup::Two => LaplacianKind::Unnormalized,
        }
    }

    pub fn replicate_seed(&self, r: usize) -> u64 {
        self.base_seed.wrapping_add(r as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub beta0: DVector<f64>,
    pub alpha0: DVector<f64>,
    pub a0: DMatrix<f64>,
    /// Active nodes in the order they were chosen.
    pub s0: Vec<usize>,
    pub gamma_x: DVector<f64>,
    pub gamma_y: f64,
    pub u: DVector<f64>,
    pub eps_y: DVector<f64>,
    pub graph: Graph,
    pub coords: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub dataset: Dataset,
    pub truth: SimTruth,
    pub laplacian: Laplacian,
    pub seed: u64,
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let v: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &v)
}

fn normal_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn signed_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let mag = if lo == hi { lo } else { Uniform::new_inclusive(lo, hi).expect("ordered").sample(rng) };
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

fn draw_coords(rng: &mut impl Rng, p: usize) -> Vec<[f64; 3]> {
    let unif = Uniform::new_inclusive(0.0, 100.0).expect("ordered");
    (0..p).map(|_| [unif.sample(rng), unif.sample(rng), unif.sample(rng)]).collect()
}

/// `Y = Xβ⁰ + Zα⁰ + γ_y U + ε` from stored truth.
pub fn outcome_from(x: &DMatrix<f64>, z: &DMatrix<f64>, truth: &SimTruth) -> DVector<f64> {
    x * &truth.beta0 + z * &truth.alpha0 + &truth.u * truth.gamma_y + &truth.eps_y
}

fn generate(cfg: &SimConfig, seed: u64) -> Result<SimData> {
    cfg.validate()?;
    let (n, p, q) = (cfg.n, cfg.p, cfg.q);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (glo, ghi) = cfg.gamma_range;

    let z = normal_matrix(&mut rng, n, q);

    let per_col = ((cfg.first_stage_density * q as f64).ceil() as usize).clamp(1, q);
    let mut a0 = DMatrix::zeros(q, p);
    for j in 0..p {
        let mut rows = sample(&mut rng, q, per_col).into_vec();
        rows.sort_unstable();
        for l in rows {
            a0[(l, j)] = rng.sample(StandardNormal);
        }
    }

    let u = normal_vector(&mut rng, n);
    let gamma_x = DVector::from_iterator(p, (0..p).map(|_| signed_uniform(&mut rng, glo, ghi)));
    let eps_x = normal_matrix(&mut rng, n, p);
    let x = &z * &a0 + &u * gamma_x.transpose() + eps_x;

    let (graph, coords, s0) = match cfg.setup {
        Setup::One => (build_ring(p)?, None, (0..cfg.s0).collect::<Vec<_>>()),
        Setup::Two => {
            let coords = match cfg.fixed_graph_seed {
                Some(gs) => draw_coords(&mut ChaCha20Rng::seed_from_u64(gs), p),
                None => draw_coords(&mut rng, p),
            };
            let graph = build_distance_graph(&coords, cfg.distance_threshold)?;
            let seed_node = rng.random_range(0..p);
            let s0 = if cfg.s0 == 0 { Vec::new() } else { contiguous_cluster(&graph, seed_node, cfg.s0)? };
            (graph, Some(coords), s0)
        }
    };

    let mut beta0 = DVector::zeros(p);
    for &j in &s0 {
        beta0[j] = signed_uniform(&mut rng, 0.5, 1.0) * cfg.si;
    }
    let gamma_y = signed_uniform(&mut rng, glo, ghi);
    let mut alpha0 = DVector::zeros(q);
    if cfg.setup == Setup::Two {
        for l in 0..cfg.n_invalid {
            alpha0[l] = cfg.alpha_invalid_value;
        }
    }
    let eps_y = normal_vector(&mut rng, n);

    let truth = SimTruth { beta0, alpha0, a0, s0, gamma_x, gamma_y, u, eps_y, graph, coords };
    let y = outcome_from(&x, &z, &truth);
    let lap = laplacian(&truth.graph, cfg.laplacian_kind());
    Ok(SimData { dataset: Dataset::new(y, x, z)?, truth, laplacian: lap, seed })
}

pub fn gen_setup1(cfg: &SimConfig, seed: u64) -> Result<SimData> {
    if cfg.setup != Setup::One {
        return Err(Error::InvalidInput("gen_setup1 needs a setup-one config".into()));
    }
    generate(cfg, seed)
}

pub fn gen_setup2(cfg: &SimConfig, seed: u64) -> Result<SimData> {
    if cfg.setup != Setup::Two {
        return Err(Error::InvalidInput("gen_setup2 needs a setup-two config".into()));
    }
    generate(cfg, seed)
}

pub fn generate_replicate(cfg: &SimConfig, r: usize) -> Result<SimData> {
    generate(cfg, cfg.replicate_seed(r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub setup: String,
    pub si: f64,
    pub s0: usize,
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    pub ok: bool,
    pub mse: Option<f64>,
    pub mcc: Option<f64>,
    pub sign_recovery: Option<bool>,
    pub n_selected: Option<usize>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    /// IVGL-S: every truly invalid instrument has a nonzero `α̂`.
    pub invalid_recovered: Option<bool>,
    /// IVGL-S: `max |α̂ₗ − α⁰ₗ|` over the truly invalid instruments.
    pub alpha_max_error: Option<f64>,
    pub irrepresentability: Option<f64>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setup: String,
    pub si: f64,
    pub s0: usize,
    pub method: Method,
    pub mean_mse: Option<f64>,
    pub se_mse: Option<f64>,
    pub median_mcc: Option<f64>,
    pub mcc_q1: Option<f64>,
    pub mcc_q3: Option<f64>,
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub records: Vec<ReplicateRecord>,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], prob: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

impl SummaryTable {
    pub fn row(&self, method: Method) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn records_for(&self, method: Method) -> impl Iterator<Item = &ReplicateRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }

    pub fn merge(tables: impl IntoIterator<Item = SummaryTable>) -> SummaryTable {
        let mut out = SummaryTable::default();
        for t in tables {
            out.rows.extend(t.rows);
            out.records.extend(t.records);
        }
        out
    }

    fn summarize(cfg: &SimConfig, methods: &[Method], records: &[ReplicateRecord]) -> Vec<SummaryRow> {
        methods
            .iter()
            .map(|&method| {
                let ok: Vec<&ReplicateRecord> =
                    records.iter().filter(|r| r.method == method && r.ok).collect();
                let mses: Vec<f64> = ok.iter().filter_map(|r| r.mse).collect();
                let mut mccs: Vec<f64> = ok.iter().filter_map(|r| r.mcc).collect();
                mccs.sort_by(f64::total_cmp);
                let k = mses.len() as f64;
                let mean = (!mses.is_empty()).then(|| mses.iter().sum::<f64>() / k);
                let se = match mean {
                    Some(m) if mses.len() > 1 => {
                        let var = mses.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1.0);
                        Some((var / k).sqrt())
                    }
                    _ => None,
                };
                SummaryRow {
                    setup: cfg.setup.to_string(),
                    si: cfg.si,
                    s0: cfg.s0,
                    method,
                    mean_mse: mean,
                    se_mse: se,
                    median_mcc: quantile(&mccs, 0.5),
                    mcc_q1: quantile(&mccs, 0.25),
                    mcc_q3: quantile(&mccs, 0.75),
                    n_ok: ok.len(),
                }
            })
            .collect()
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "setup", "si", "s0", "method", "mean_mse", "se_mse", "median_mcc", "mcc_q1", "mcc_q3",
            "n_ok",
        ])?;
        for r in &self.rows {
            out.write_record([
                r.setup.clone(),
                fmt_f(r.si),
                r.s0.to_string(),
                r.method.to_string(),
                opt_f(r.mean_mse),
                opt_f(r.se_mse),
                opt_f(r.median_mcc),
                opt_f(r.mcc_q1),
                opt_f(r.mcc_q3),
                r.n_ok.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_replicates_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "setup", "si", "s0", "replicate", "seed", "method", "ok", "mse", "mcc",
            "sign_recovery", "n_selected", "lambda1", "lambda2", "lambda3", "invalid_recovered",
            "alpha_max_error", "irrepresentability", "converged", "error",
        ])?;
        let ob = |b: Option<bool>| b.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            out.write_record([
                r.setup.clone(),
                fmt_f(r.si),
                r.s0.to_string(),
                r.replicate.to_string(),
                r.seed.to_string(),
                r.method.to_string(),
                r.ok.to_string(),
                opt_f(r.mse),
                opt_f(r.mcc),
                ob(r.sign_recovery),
                r.n_selected.map(|v| v.to_string()).unwrap_or_default(),
                opt_f(r.lambda1),
                opt_f(r.lambda2),
                opt_f(r.lambda3),
                ob(r.invalid_recovered),
                opt_f(r.alpha_max_error),
                opt_f(r.irrepresentability),
                ob(r.converged),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Long-format MCC samples, one row per (configuration, method, replicate).
    pub fn write_mcc_long_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["setup", "si", "s0", "method", "replicate", "mcc"])?;
        for r in self.records.iter().filter(|r| r.ok) {
            if let Some(m) = r.mcc {
                out.write_record([
                    r.setup.clone(),
                    fmt_f(r.si),
                    r.s0.to_string(),
                    r.method.to_string(),
                    r.replicate.to_string(),
                    fmt_f(m),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn opt_f(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn failed(cfg: &SimConfig, r: usize, seed: u64, method: Method, err: &Error) -> ReplicateRecord {
    ReplicateRecord {
        setup: cfg.setup.to_string(),
        si: cfg.si,
        s0: cfg.s0,
        replicate: r,
        seed,
        method,
        ok: false,
        mse: None,
        mcc: None,
        sign_recovery: None,
        n_selected: None,
        lambda1: None,
        lambda2: None,
        lambda3: None,
        invalid_recovered: None,
        alpha_max_error: None,
        irrepresentability: None,
        converged: None,
        error: Some(err.to_string()),
    }
}

fn evaluate(
    cfg: &SimConfig,
    r: usize,
    data: &SimData,
    fit: &FitResult,
    design: &DMatrix<f64>,
) -> Result<ReplicateRecord> {
    let truth = &data.truth;
    let outcome = SelectionOutcome::from_supports(&fit.beta, &truth.beta0)?;
    let (invalid_recovered, alpha_max_error) = match &fit.alpha {
        Some(alpha) => {
            let k = cfg.n_invalid.min(alpha.len());
            let recovered = (0..k).all(|l| alpha[l] != 0.0);
            let err = (0..k).map(|l| (alpha[l] - truth.alpha0[l]).abs()).fold(None, |acc: Option<f64>, e| {
                Some(acc.map_or(e, |a| a.max(e)))
            });
            (Some(recovered), err)
        }
        None => (None, None),
    };
    let signs: Vec<f64> = truth.s0.iter().map(|&j| truth.beta0[j].signum()).collect();
    let irrep = if truth.s0.is_empty() {
        None
    } else {
        irrepresentability(design, &data.laplacian, fit.lambda2.unwrap_or(0.0), &truth.s0, &signs).ok()
    };
    Ok(ReplicateRecord {
        setup: cfg.setup.to_string(),
        si: cfg.si,
        s0: cfg.s0,
        replicate: r,
        seed: data.seed,
        method: fit.method,
        ok: true,
        mse: Some(mse(&fit.beta, &truth.beta0)?),
        mcc: Some(mcc(&outcome)),
        sign_recovery: Some(sign_recovery(&fit.beta, &truth.beta0)?),
        n_selected: Some(fit.support.len()),
        lambda1: Some(fit.lambda1),
        lambda2: fit.lambda2,
        lambda3: fit.lambda3,
        invalid_recovered,
        alpha_max_error,
        irrepresentability: irrep,
        converged: Some(fit.converged),
        error: None,
    })
}

type FirstStage = Result<Option<(CvDesign, Stage1Fit)>>;

fn first_stage(data: &SimData, methods: &[Method], fit_cfg: &FitConfig) -> FirstStage {
    if !methods.iter().any(|m| m.needs_instruments()) {
        return Ok(None);
    }
    let ds = &data.dataset;
    let design = CvDesign::new(&ds.z, &fit_cfg.solver)?;
    let s1 = stage1_fit_on(&design, &ds.z, &ds.x, &fit_cfg.solver)?;
    Ok(Some((design, s1)))
}

fn fit_methods(
    cfg: &SimConfig,
    r: usize,
    data: &SimData,
    stage: &FirstStage,
    methods: &[Method],
    fit_cfg: &FitConfig,
) -> Vec<ReplicateRecord> {
    let ds = &data.dataset;
    methods
        .iter()
        .map(|&method| {
            let fitted = match (stage, method) {
                (_, Method::Gl) => gl_fit(ds, &data.laplacian, fit_cfg).map(|f| (f, &ds.x)),
                (Err(e), _) => Err(Error::InvalidInput(format!("first stage failed: {e}"))),
                (Ok(Some((design, s1))), m) => match m {
                    Method::Ivl => ivl_second_stage(&s1.x_hat, &ds.y, fit_cfg),
                    Method::Ivgl => ivgl_second_stage(&s1.x_hat, &ds.y, &data.laplacian, fit_cfg),
                    _ => ivgls_fit_with_stage1(ds, &data.laplacian, design, s1, fit_cfg).map(|r| r.0),
                }
                .map(|f| (f, &s1.x_hat)),
                (Ok(None), _) => unreachable!("instrumented methods build a first stage"),
            };
            fitted
                .and_then(|(fit, design)| evaluate(cfg, r, data, &fit, design))
                .unwrap_or_else(|e| failed(cfg, r, data.seed, method, &e))
        })
        .collect()
}

/// Fits every requested method on one replicate, sharing the first stage.
pub fn run_replicate(
    cfg: &SimConfig,
    r: usize,
    methods: &[Method],
    fit_cfg: &FitConfig,
) -> Vec<ReplicateRecord> {
    run_replicate_cells(std::slice::from_ref(cfg), r, methods, fit_cfg).pop().unwrap_or_default()
}

/// One replicate across several configurations. Cells whose generated
/// exposures and instruments coincide (the draws that precede the graph and
/// effect sizes) share one first-stage fit.
fn run_replicate_cells(
    cells: &[SimConfig],
    r: usize,
    methods: &[Method],
    fit_cfg: &FitConfig,
) -> Vec<Vec<ReplicateRecord>> {
    let mut stages: Vec<(u64, DMatrix<f64>, DMatrix<f64>, FirstStage)> = Vec::new();
    cells
        .iter()
        .map(|cfg| {
            let seed = cfg.replicate_seed(r);
            let data = match generate(cfg, seed) {
                Ok(d) => d,
                Err(e) => return methods.iter().map(|&m| failed(cfg, r, seed, m, &e)).collect(),
            };
            let fit_cfg = fit_cfg.clone().with_seed(seed);
            let ds = &data.dataset;
            let pos = stages.iter().position(|(s, x, z, _)| *s == seed && *x == ds.x && *z == ds.z);
            let pos = pos.unwrap_or_else(|| {
                let stage = first_stage(&data, methods, &fit_cfg);
                stages.push((seed, ds.x.clone(), ds.z.clone(), stage));
                stages.len() - 1
            });
            fit_methods(cfg, r, &data, &stages[pos].3, methods, &fit_cfg)
        })
        .collect()
}

fn check_methods(methods: &[Method]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::InvalidInput("at least one method is required".into()));
    }
    Ok(())
}

/// Runs replicates `1..=n_replicates` with seeds `base_seed + r`, in parallel,
/// and merges them in replicate order.
pub fn run_replications(cfg: &SimConfig, methods: &[Method], fit_cfg: &FitConfig) -> Result<SummaryTable> {
    Ok(run_sweep(std::slice::from_ref(cfg), methods, fit_cfg)?.remove(0))
}

/// [`run_replications`] for several configurations at once, returning one
/// table per configuration. The result equals running each configuration on
/// its own; replicates are only grouped so first stages can be shared.
pub fn run_sweep(cells: &[SimConfig], methods: &[Method], fit_cfg: &FitConfig) -> Result<Vec<SummaryTable>> {
    check_methods(methods)?;
    for cfg in cells {
        cfg.validate()?;
    }
    let reps = cells.iter().map(|c| c.n_replicates).max().unwrap_or(0);
    let per_rep: Vec<Vec<Vec<ReplicateRecord>>> = (1..=reps)
        .into_par_iter()
        .map(|r| {
            let active: Vec<SimConfig> =
                cells.iter().filter(|c| r <= c.n_replicates).cloned().collect();
            let mut out = run_replicate_cells(&active, r, methods, fit_cfg).into_iter();
            cells
                .iter()
                .map(|c| if r <= c.n_replicates { out.next().unwrap_or_default() } else { Vec::new() })
                .collect()
        })
        .collect();
    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, cfg)| {
            let records: Vec<ReplicateRecord> =
                per_rep.iter().flat_map(|rep| rep[c].iter().cloned()).collect();
            let rows = SummaryTable::summarize(cfg, methods, &records);
            SummaryTable { rows, records }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), Some(2.5));
        assert_eq!(quantile(&v, 0.25), Some(1.75));
        assert_eq!(quantile(&[7.0], 0.75), Some(7.0));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::setup1(1.0, 4);
        assert!(c.validate().is_ok());
        c.s0 = 71;
        assert!(c.validate().is_err());
        let mut c = SimConfig::setup2(1.0, 4);
        c.n_invalid = 501;
        assert!(c.validate().is_err());
        let mut c = SimConfig::setup1(1.0, 4);
        c.first_stage_density = 0.0;
        assert!(c.validate().is_err());
        assert!(gen_setup2(&SimConfig::setup1(1.0, 4), 1).is_err());
    }
}
