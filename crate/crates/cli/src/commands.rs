use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use indexmap::IndexMap;
use ivgl::graph::{build_distance_graph, laplacian as build_laplacian, Graph, Laplacian, LaplacianKind};
use ivgl::invalid_iv::ivgls_fit;
use ivgl::simulate::{generate_replicate, run_sweep, Setup, SimConfig, SummaryTable};
use ivgl::two_stage::{
    gl_fit, ivgl_fit, ivl_fit, sis_screen, Dataset, ExposureDesign, FitConfig, FitResult, Method,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::io::{clean_zero, read_coords, read_edges, read_table, write_coords, write_edges, write_json, write_table};
use crate::manifest::ManifestBuilder;
use crate::{ExposureArg, FitArgs, GraphArgs, InputError, KindArg, LaplacianArgs, ScreenArgs, SetupArg, SimulateArgs};

pub const FIT_SCHEMA: u32 = 1;

/// `IVGL_SEED`, when set, takes precedence over `--seed`.
fn resolve_seed(flag: u64) -> Result<u64> {
    match std::env::var("IVGL_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| InputError(format!("IVGL_SEED must be a non-negative integer, got `{v}`")).into()),
        Err(_) => Ok(flag),
    }
}

fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: Method = name.parse().map_err(|e| InputError(format!("--methods: {e}")))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        bail!(InputError("--methods needs at least one method".into()));
    }
    Ok(out)
}

fn kind(k: KindArg) -> LaplacianKind {
    match k {
        KindArg::Normalized => LaplacianKind::Normalized,
        KindArg::Unnormalized => LaplacianKind::Unnormalized,
    }
}

fn exposure(e: ExposureArg) -> ExposureDesign {
    match e {
        ExposureArg::Fitted => ExposureDesign::Fitted,
        ExposureArg::Raw => ExposureDesign::Raw,
    }
}

/// Directory holding `file`, created if missing.
fn out_dir(file: &Path) -> Result<PathBuf> {
    let dir = match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads the graph named by `--edges` or `--coords`, if either is given.
fn load_graph(args: &GraphArgs, p: Option<usize>, manifest: &mut ManifestBuilder) -> Result<Option<Graph>> {
    if let Some(path) = &args.edges {
        manifest.input(path);
        return Ok(Some(read_edges(path, p)?));
    }
    if let Some(path) = &args.coords {
        manifest.input(path);
        let coords = read_coords(path)?;
        if let Some(p) = p {
            if coords.len() != p {
                bail!(InputError(format!("{} has {} rows but there are {p} nodes", path.display(), coords.len())));
            }
        }
        let threshold = args.threshold.ok_or_else(|| InputError("--coords needs --threshold".into()))?;
        return Ok(Some(build_distance_graph(&coords, threshold)?));
    }
    Ok(None)
}

fn warn_isolated(g: &Graph) {
    let iso = g.isolated_nodes();
    if !iso.is_empty() {
        let list: Vec<String> = iso.iter().map(|j| (j + 1).to_string()).collect();
        eprintln!("warning: {} isolated node(s): {}", iso.len(), list.join(", "));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitJson {
    pub schema: u32,
    pub method: Method,
    pub beta: IndexMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<IndexMap<String, f64>>,
    pub lambda1: f64,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub support: Vec<String>,
    pub invalid_instruments: Vec<String>,
    pub objective: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterations: Option<usize>,
    pub seed: u64,
}

impl FitJson {
    pub fn new(fit: &FitResult, ds: &Dataset, seed: u64) -> Self {
        let beta = (0..ds.p()).map(|j| (ds.node_name(j), clean_zero(fit.beta[j]))).collect();
        let alpha = fit
            .alpha
            .as_ref()
            .map(|a| (0..ds.q()).map(|l| (ds.instrument_name(l), clean_zero(a[l]))).collect());
        Self {
            schema: FIT_SCHEMA,
            method: fit.method,
            beta,
            alpha,
            lambda1: fit.lambda1,
            lambda2: fit.lambda2,
            lambda3: fit.lambda3,
            support: fit.support.iter().map(|&j| ds.node_name(j)).collect(),
            invalid_instruments: fit.invalid_instruments().iter().map(|&l| ds.instrument_name(l)).collect(),
            objective: fit.objective,
            converged: fit.converged,
            iterations: fit.iterations,
            seed,
        }
    }
}

fn check_rows(path: &Path, rows: usize, ref_path: &Path, ref_rows: usize) -> Result<()> {
    if rows != ref_rows {
        bail!(InputError(format!(
            "row mismatch: {} has {rows} rows but {} has {ref_rows}",
            path.display(),
            ref_path.display()
        )));
    }
    Ok(())
}

pub fn fit(args: FitArgs) -> Result<()> {
    let method: Method = args.method.parse().map_err(|e| InputError(format!("--method: {e}")))?;
    let seed = resolve_seed(args.seed)?;
    let mut manifest = ManifestBuilder::new("fit", serde_json::to_value(&args)?, Some(seed));

    if method.needs_instruments() && args.z.is_none() {
        bail!(InputError(format!("--method {} requires --z", args.method)));
    }
    let needs_graph = matches!(method, Method::Gl | Method::Ivgl | Method::IvglS);
    if needs_graph && args.graph.edges.is_none() && args.graph.coords.is_none() {
        bail!(InputError(format!("--method {} requires --edges or --coords", args.method)));
    }

    manifest.input(&args.y);
    manifest.input(&args.x);
    let y = read_table(&args.y)?;
    if y.values.ncols() != 1 {
        bail!(InputError(format!("{} must have exactly one column", args.y.display())));
    }
    let x = read_table(&args.x)?;
    check_rows(&args.x, x.values.nrows(), &args.y, y.values.nrows())?;
    let z = match &args.z {
        Some(path) => {
            manifest.input(path);
            let z = read_table(path)?;
            check_rows(path, z.values.nrows(), &args.y, y.values.nrows())?;
            Some(z)
        }
        None => None,
    };
    let n = y.values.nrows();
    let (z_values, z_names) = match z {
        Some(t) => (t.values, t.names),
        None => (DMatrix::zeros(n, 0), Vec::new()),
    };
    let ds = Dataset::new(DVector::from_column_slice(y.values.as_slice()), x.values, z_values)?
        .with_names(x.names, z_names)?;

    let graph = load_graph(&args.graph, Some(ds.p()), &mut manifest)?;
    if let Some(g) = &graph {
        warn_isolated(g);
    }
    let lap = graph.as_ref().map(|g| build_laplacian(g, kind(args.laplacian)));

    let mut cfg = FitConfig::default().with_seed(seed);
    if let Some(grid) = &args.lambda2_grid {
        cfg.lambda2_grid = grid.clone();
    }
    cfg.exposure_design = exposure(args.exposure_design);
    cfg.max_alt_iters = args.max_alt_iters;
    let need_lap = || lap.as_ref().expect("graph presence checked above");
    let result = match method {
        Method::Gl => gl_fit(&ds, need_lap(), &cfg)?,
        Method::Ivl => ivl_fit(&ds, &cfg)?,
        Method::Ivgl => ivgl_fit(&ds, need_lap(), &cfg)?,
        Method::IvglS => ivgls_fit(&ds, need_lap(), &cfg)?,
    };
    if !result.converged {
        eprintln!("warning: the fit did not converge; the last iterate is reported");
    }
    let dir = out_dir(&args.out)?;
    write_json(&args.out, &FitJson::new(&result, &ds, seed))?;
    manifest.finish(&dir, &[&file_name(&args.out)])?;
    println!(
        "{}: {} of {} exposures selected, written to {}",
        result.method,
        result.support.len(),
        ds.p(),
        args.out.display()
    );
    Ok(())
}

pub fn screen(args: ScreenArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("screen", serde_json::to_value(&args)?, None);
    manifest.input(&args.z);
    manifest.input(&args.x);
    let z = read_table(&args.z)?;
    let x = read_table(&args.x)?;
    check_rows(&args.z, z.values.nrows(), &args.x, x.values.nrows())?;
    if args.top == 0 || args.top > z.values.ncols() {
        bail!(InputError(format!("--top must lie in 1..={}, got {}", z.values.ncols(), args.top)));
    }
    let ranked = sis_screen(&z.values, &x.values, args.top)?;
    let dir = out_dir(&args.out)?;
    let file = File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["instrument", "index", "score"])?;
    for (l, score) in &ranked {
        w.write_record([z.names[*l].clone(), (l + 1).to_string(), ivgl::simulate::fmt_f(*score)])?;
    }
    w.flush()?;
    drop(w);
    manifest.finish(&dir, &[&file_name(&args.out)])?;
    println!("kept {} of {} instruments in {}", ranked.len(), z.values.ncols(), args.out.display());
    Ok(())
}

pub fn laplacian(args: LaplacianArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("laplacian", serde_json::to_value(&args)?, None);
    if args.graph.edges.is_none() && args.graph.coords.is_none() {
        bail!(InputError("either --edges or --coords is required".into()));
    }
    let g = load_graph(&args.graph, args.nodes, &mut manifest)?.expect("a graph source was given");
    warn_isolated(&g);
    let lap: Laplacian = build_laplacian(&g, kind(args.kind));
    let names: Vec<String> = (1..=g.p()).map(|j| j.to_string()).collect();
    let dir = out_dir(&args.out)?;
    write_table(&args.out, &names, lap.matrix())?;
    manifest.finish(&dir, &[&file_name(&args.out)])?;
    let ev = lap.eigenvalues();
    let max_row_sum = lap.matrix().row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max);
    println!("nodes: {}", g.p());
    println!("edges: {}", g.edges().len());
    println!("eigenvalue range: [{}, {}]", clean_zero(ev.min()), clean_zero(ev.max()));
    println!("max |row sum|: {}", clean_zero(max_row_sum));
    Ok(())
}

fn cells(args: &SimulateArgs, base_seed: u64) -> Result<Vec<SimConfig>> {
    if args.reps == 0 {
        bail!(InputError("--reps must be at least 1".into()));
    }
    let mut out = Vec::new();
    for &si in &args.si {
        for &s0 in &args.s0 {
            let mut c = match args.setup {
                SetupArg::One => SimConfig::setup1(si, s0),
                SetupArg::Two => SimConfig::setup2(si, s0),
            };
            c.n = args.n.unwrap_or(c.n);
            c.p = args.p.unwrap_or(c.p);
            c.q = args.q.unwrap_or(c.q);
            c.n_invalid = c.n_invalid.min(c.q);
            c.n_replicates = args.reps;
            c.base_seed = base_seed;
            c.fixed_graph_seed = args.fixed_graph_seed;
            c.validate()?;
            out.push(c);
        }
    }
    Ok(out)
}

fn dump_replicate(dir: &Path, cfg: &SimConfig, r: usize) -> Result<()> {
    let data = generate_replicate(cfg, r)?;
    fs::create_dir_all(dir)?;
    let ds = &data.dataset;
    let nodes: Vec<String> = (0..ds.p()).map(|j| ds.node_name(j)).collect();
    let instruments: Vec<String> = (0..ds.q()).map(|l| ds.instrument_name(l)).collect();
    write_table(&dir.join("y.csv"), &["y".into()], &DMatrix::from_column_slice(ds.n(), 1, ds.y.as_slice()))?;
    write_table(&dir.join("x.csv"), &nodes, &ds.x)?;
    write_table(&dir.join("z.csv"), &instruments, &ds.z)?;
    write_edges(&dir.join("edges.tsv"), &data.truth.graph)?;
    if let Some(coords) = &data.truth.coords {
        write_coords(&dir.join("coords.csv"), coords)?;
    }
    let truth = serde_json::json!({
        "seed": data.seed,
        "laplacian": data.laplacian.kind(),
        "beta0": data.truth.beta0.iter().map(|v| clean_zero(*v)).collect::<Vec<_>>(),
        "alpha0": data.truth.alpha0.iter().map(|v| clean_zero(*v)).collect::<Vec<_>>(),
        "active": data.truth.s0.iter().map(|j| j + 1).collect::<Vec<_>>(),
        "gamma_x": data.truth.gamma_x.as_slice(),
        "gamma_y": data.truth.gamma_y,
    });
    write_json(&dir.join("truth.json"), &truth)
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let methods = parse_methods(&args.methods)?;
    let seed = resolve_seed(args.seed)?;
    let manifest = ManifestBuilder::new("simulate", serde_json::to_value(&args)?, Some(seed));
    let cells = cells(&args, seed)?;
    let fit_cfg = FitConfig {
        exposure_design: exposure(args.exposure_design),
        max_alt_iters: args.max_alt_iters,
        ..FitConfig::default()
    };
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;

    let tables = run_sweep(&cells, &methods, &fit_cfg)?;
    let table = SummaryTable::merge(tables);
    let create = |name: &str| -> Result<BufWriter<File>> {
        let path = args.out.join(name);
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?))
    };
    table.write_summary_csv(create("summary.csv")?)?;
    table.write_replicates_csv(create("replicates.csv")?)?;
    table.write_mcc_long_csv(create("mcc_long.csv")?)?;

    if args.dump_data {
        for cfg in &cells {
            let cell = format!("si{}_s0{}", cfg.si, cfg.s0);
            for r in 1..=cfg.n_replicates {
                dump_replicate(&args.out.join("data").join(&cell).join(format!("rep{r:03}")), cfg, r)?;
            }
        }
    }
    manifest.finish(&args.out, &["summary.csv", "replicates.csv", "mcc_long.csv"])?;

    for row in &table.rows {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.5}"));
        println!(
            "setup {} si {} s0 {:>2} {:<6} mean MSE {} (SE {}) median MCC {} n_ok {}",
            row.setup,
            row.si,
            row.s0,
            row.method.to_string(),
            fmt(row.mean_mse),
            fmt(row.se_mse),
            fmt(row.median_mcc),
            row.n_ok
        );
        if row.n_ok < args.reps {
            eprintln!(
                "note: {} of {} replicates of {} failed (see replicates.csv)",
                args.reps - row.n_ok,
                args.reps,
                row.method
            );
        }
    }
    if cells.iter().any(|c| c.setup == Setup::Two) && methods.contains(&Method::IvglS) {
        let recovered = table.records_for(Method::IvglS).filter(|r| r.invalid_recovered == Some(true)).count();
        println!("IVGL-S recovered every invalid instrument in {recovered} replicate fits");
    }
    Ok(())
}
