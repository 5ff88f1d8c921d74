//! Predictor networks and their Laplacians.
//!
//! Node indices are 0-based throughout the library; file formats use 1-based
//! indices and are translated at the I/O boundary.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues in `[-NEG_CLAMP, 0)` are treated as exact zeros when taking the
/// square root of a Laplacian.
const NEG_CLAMP: f64 = 1e-12;
/// Eigenvalues at or below this are dropped from the square-root factor.
const RANK_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Weighted undirected graph over `p` nodes.
///
/// Edges are stored once with `src < dst`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    p: usize,
    edges: Vec<Edge>,
    degrees: Vec<f64>,
}

impl Graph {
    pub fn new(p: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut normalized = Vec::new();
        for (a, b, w) in edges {
            if a >= p || b >= p {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node outside 0..{p}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has invalid weight {w}"
                )));
            }
            let (src, dst) = if a < b { (a, b) } else { (b, a) };
            normalized.push(Edge { src, dst, weight: w });
        }
        normalized.sort_by_key(|e| (e.src, e.dst));
        if let Some(dup) = normalized
            .windows(2)
            .find(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst))
        {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                dup[0].src, dup[0].dst
            )));
        }
        let mut degrees = vec![0.0; p];
        for e in &normalized {
            degrees[e.src] += e.weight;
            degrees[e.dst] += e.weight;
        }
        Ok(Self { p, edges: normalized, degrees })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| self.degrees[j] == 0.0).collect()
    }

    /// Dense symmetric adjacency matrix.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.p, self.p);
        for e in &self.edges {
            a[(e.src, e.dst)] = e.weight;
            a[(e.dst, e.src)] = e.weight;
        }
        a
    }

    /// Neighbour lists sorted by ascending index.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.p];
        for e in &self.edges {
            nb[e.src].push(e.dst);
            nb[e.dst].push(e.src);
        }
        for list in &mut nb {
            list.sort_unstable();
        }
        nb
    }

    /// Relabels node `j` as `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.p || perm.iter().collect::<BTreeSet<_>>().len() != self.p {
            return Err(Error::InvalidInput("not a permutation of the nodes".into()));
        }
        Graph::new(
            self.p,
            self.edges.iter().map(|e| (perm[e.src], perm[e.dst], e.weight)),
        )
    }
}

/// Unit-weight cycle `0 - 1 - ... - (p-1) - 0`.
pub fn build_ring(p: usize) -> Result<Graph> {
    if p < 3 {
        return Err(Error::InvalidGraph(format!("a ring needs at least 3 nodes, got {p}")));
    }
    Graph::new(p, (0..p).map(|j| (j, (j + 1) % p, 1.0)))
}

/// Unit-weight edge between every pair of points strictly closer than `threshold`.
pub fn build_distance_graph(coords: &[[f64; 3]], threshold: f64) -> Result<Graph> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidInput(format!("threshold must be positive, got {threshold}")));
    }
    if coords.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("coordinates contain non-finite values".into()));
    }
    let mut edges = Vec::new();
    for j in 0..coords.len() {
        for k in (j + 1)..coords.len() {
            let d2: f64 = (0..3).map(|c| (coords[j][c] - coords[k][c]).powi(2)).sum();
            if d2.sqrt() < threshold {
                edges.push((j, k, 1.0));
            }
        }
    }
    Graph::new(coords.len(), edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianKind {
    Normalized,
    Unnormalized,
}

impl std::str::FromStr for LaplacianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "unnormalized" => Ok(Self::Unnormalized),
            other => Err(Error::InvalidInput(format!("unknown Laplacian kind `{other}`"))),
        }
    }
}

/// A graph Laplacian together with a factor `S` such that `SᵀS = L`.
#[derive(Debug, Clone)]
pub struct Laplacian {
    kind: LaplacianKind,
    matrix: DMatrix<f64>,
    sqrt_factor: DMatrix<f64>,
    eigenvalues: DVector<f64>,
}

impl Laplacian {
    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `r × p` factor with `r` the numerical rank.
    pub fn sqrt_factor(&self) -> &DMatrix<f64> {
        &self.sqrt_factor
    }

    /// Eigenvalues in ascending order (after clamping).
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.sqrt_factor.nrows()
    }

    pub fn quad_form(&self, beta: &DVector<f64>) -> f64 {
        beta.dot(&(&self.matrix * beta))
    }

    /// Zero Laplacian on `p` nodes, i.e. no graph penalty.
    pub fn empty(p: usize) -> Self {
        Self {
            kind: LaplacianKind::Unnormalized,
            matrix: DMatrix::zeros(p, p),
            sqrt_factor: DMatrix::zeros(0, p),
            eigenvalues: DVector::zeros(p),
        }
    }

    /// Builds a Laplacian from an explicit symmetric PSD matrix.
    pub fn from_matrix(kind: LaplacianKind, matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch("Laplacian must be square".into()));
        }
        let p = matrix.nrows();
        for j in 0..p {
            for k in 0..j {
                if (matrix[(j, k)] - matrix[(k, j)]).abs() > 1e-12 {
                    return Err(Error::InvalidInput("Laplacian must be symmetric".into()));
                }
            }
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let mut eigenvalues = DVector::zeros(p);
        let mut rows = Vec::new();
        for (slot, &i) in order.iter().enumerate() {
            let mut ev = eig.eigenvalues[i];
            if ev < 0.0 {
                if ev < -1e-10 {
                    return Err(Error::InvalidInput(format!(
                        "Laplacian is not positive semidefinite (eigenvalue {ev:e})"
                    )));
                }
                if ev >= -NEG_CLAMP {
                    ev = 0.0;
                }
            }
            eigenvalues[slot] = ev;
            if ev > RANK_CUTOFF {
                rows.push(eig.eigenvectors.column(i).transpose() * ev.sqrt());
            }
        }
        let sqrt_factor = if rows.is_empty() {
            DMatrix::zeros(0, p)
        } else {
            DMatrix::from_rows(&rows)
        };
        Ok(Self { kind, matrix, sqrt_factor, eigenvalues })
    }
}

pub fn laplacian(g: &Graph, kind: LaplacianKind) -> Laplacian {
    let p = g.p();
    let d = g.degrees();
    let mut m = DMatrix::zeros(p, p);
    match kind {
        LaplacianKind::Unnormalized => {
            for j in 0..p {
                m[(j, j)] = d[j];
            }
            for e in g.edges() {
                m[(e.src, e.dst)] -= e.weight;
                m[(e.dst, e.src)] -= e.weight;
            }
        }
        LaplacianKind::Normalized => {
            for j in 0..p {
                if d[j] != 0.0 {
                    m[(j, j)] = 1.0;
                }
            }
            for e in g.edges() {
                // zero-weight edges leave both degrees possibly zero
                if e.weight == 0.0 {
                    continue;
                }
                let v = -e.weight / (d[e.src] * d[e.dst]).sqrt();
                m[(e.src, e.dst)] = v;
                m[(e.dst, e.src)] = v;
            }
        }
    }
    Laplacian::from_matrix(kind, m).expect("graph Laplacians are symmetric PSD")
}

/// Grows a connected node set of `size` nodes by breadth-first search from
/// `seed`, visiting neighbours in ascending index order.
///
/// When the seed's component is smaller than `size`, the remaining slots are
/// filled with unused nodes closest to `seed` by index (lower index first on ties).
pub fn contiguous_cluster(g: &Graph, seed: usize, size: usize) -> Result<Vec<usize>> {
    let p = g.p();
    if seed >= p {
        return Err(Error::InvalidInput(format!("seed node {seed} outside 0..{p}")));
    }
    if size == 0 || size > p {
        return Err(Error::InvalidInput(format!("cluster size {size} must be in 1..={p}")));
    }
    let nb = g.neighbors();
    let mut used = vec![false; p];
    let mut out = Vec::with_capacity(size);
    let mut queue = VecDeque::from([seed]);
    used[seed] = true;
    while let Some(j) = queue.pop_front() {
        out.push(j);
        if out.len() == size {
            return Ok(out);
        }
        for &k in &nb[j] {
            if !used[k] {
                used[k] = true;
                queue.push_back(k);
            }
        }
    }
    let mut rest: Vec<usize> = (0..p).filter(|&j| !used[j]).collect();
    rest.sort_by_key(|&j| (j.abs_diff(seed), j));
    out.extend(rest.into_iter().take(size - out.len()));
    Ok(out)
}
