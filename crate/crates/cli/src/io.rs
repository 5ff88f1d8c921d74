//! File formats: headed comma-separated matrices, 1-based edge lists and
//! coordinate tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ivgl::graph::Graph;
use ivgl::simulate::fmt_f;
use nalgebra::DMatrix;

use crate::InputError;

/// Numeric CSV with a header row naming the columns.
pub struct Table {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let what = path.display();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| InputError(format!("cannot open {what}: {e}")))?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| InputError(format!("{what}: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(InputError(format!("{what} has no header row")).into());
    }
    let mut flat = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| InputError(format!("{what}: {e}")))?;
        if rec.len() != names.len() {
            return Err(InputError(format!(
                "{what} line {}: expected {} fields, found {}",
                i + 2,
                names.len(),
                rec.len()
            ))
            .into());
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                InputError(format!("{what} line {}, column `{}`: `{field}` is not a number", i + 2, names[c]))
            })?;
            if !v.is_finite() {
                return Err(InputError(format!(
                    "{what} line {}, column `{}`: non-finite value",
                    i + 2,
                    names[c]
                ))
                .into());
            }
            flat.push(v);
        }
        rows += 1;
    }
    Ok(Table { values: DMatrix::from_row_slice(rows, names.len(), &flat), names })
}

pub fn write_table(path: &Path, names: &[String], values: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(names)?;
    for row in values.row_iter() {
        w.write_record(row.iter().map(|v| fmt_f(clean_zero(*v))))?;
    }
    w.flush()?;
    Ok(())
}

/// Maps `-0.0` to `0.0` so written files never show a signed zero.
pub fn clean_zero(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Tab- or whitespace-separated `src dst [weight]` lines with 1-based node
/// indices. Blank lines and `#` comments are skipped, as is a non-numeric
/// first line (a header).
pub fn read_edges(path: &Path, p: Option<usize>) -> Result<Graph> {
    let what = path.display();
    let file = File::open(path).map_err(|e| InputError(format!("cannot open {what}: {e}")))?;
    let mut edges = Vec::new();
    let mut max_node = 0;
    let mut seen_data = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| InputError(format!("{what}: {e}")))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed: Option<(usize, usize)> = match fields.as_slice() {
            [a, b] | [a, b, _] => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        let Some((a, b)) = parsed else {
            if !seen_data && fields.len() >= 2 && fields[0].parse::<f64>().is_err() {
                seen_data = true;
                continue;
            }
            return Err(InputError(format!("{what} line {}: expected `src dst [weight]`", i + 1)).into());
        };
        seen_data = true;
        if a == 0 || b == 0 {
            return Err(InputError(format!("{what} line {}: node indices are 1-based", i + 1)).into());
        }
        let w = match fields.get(2) {
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| InputError(format!("{what} line {}: bad weight `{s}`", i + 1)))?,
            None => 1.0,
        };
        max_node = max_node.max(a).max(b);
        edges.push((a - 1, b - 1, w));
    }
    let p = match p {
        Some(p) if max_node > p => {
            return Err(InputError(format!("{what} references node {max_node} but there are only {p} nodes")).into())
        }
        Some(p) => p,
        None => max_node,
    };
    Graph::new(p, edges).map_err(|e| InputError(format!("{what}: {e}")).into())
}

pub fn write_edges(path: &Path, g: &Graph) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    writeln!(w, "src\tdst\tweight")?;
    for e in g.edges() {
        writeln!(w, "{}\t{}\t{}", e.src + 1, e.dst + 1, fmt_f(e.weight))?;
    }
    w.flush()?;
    Ok(())
}

/// Three-column coordinate table, one row per node.
pub fn read_coords(path: &Path) -> Result<Vec<[f64; 3]>> {
    let t = read_table(path)?;
    if t.values.ncols() != 3 {
        bail!(InputError(format!("{} must have exactly three columns", path.display())));
    }
    Ok(t.values.row_iter().map(|r| [r[0], r[1], r[2]]).collect())
}

pub fn write_coords(path: &Path, coords: &[[f64; 3]]) -> Result<()> {
    let m = DMatrix::from_fn(coords.len(), 3, |i, j| coords[i][j]);
    write_table(path, &["x".into(), "y".into(), "z".into()], &m)
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
