//! Communication graphs, Metropolis mixing matrices and their spectral
//! properties.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::numerics::{spectral_norm, sym_eigvals, Matrix, RngStream, SYMMETRY_TOL};
use crate::{Error, Result};

/// Tolerance for the doubly stochastic row/column sum checks.
pub const STOCHASTIC_TOL: f64 = 1e-9;

const ER_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Complete,
    Ring,
    Star,
    ErdosRenyi,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::Complete => "complete",
            TopologyKind::Ring => "ring",
            TopologyKind::Star => "star",
            TopologyKind::ErdosRenyi => "erdos_renyi",
        })
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Self::Complete),
            "ring" => Ok(Self::Ring),
            "star" => Ok(Self::Star),
            "erdos_renyi" | "er" | "random" => Ok(Self::ErdosRenyi),
            other => Err(Error::param(
                "topology",
                format!("unknown kind `{other}` (complete|ring|star|erdos_renyi)"),
            )),
        }
    }
}

/// Simple undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    /// Sorted, each pair stored once as `(i, j)` with `i < j`.
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from an edge list, normalising pair order.
    /// Self-loops, duplicates and out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::param("edges", format!("self-loop on node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::param(
                    "edges",
                    format!("edge ({a}, {b}) outside 0..{n}"),
                ));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        let before = norm.len();
        norm.dedup();
        if norm.len() != before {
            return Err(Error::param("edges", "duplicate edge"));
        }
        Ok(Self { n, edges: norm })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges
            .binary_search(&(i.min(j), i.max(j)))
            .is_ok()
    }

    /// Connected components, each listed in ascending node order, ordered
    /// by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(i, j) in &self.edges {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
        let mut slot = vec![usize::MAX; self.n];
        let mut comps: Vec<Vec<usize>> = Vec::new();
        for v in 0..self.n {
            let r = find(&mut parent, v);
            if slot[r] == usize::MAX {
                slot[r] = comps.len();
                comps.push(Vec::new());
            }
            comps[slot[r]].push(v);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components().len() == 1
    }
}

/// Builds one of the supported topologies.
///
/// Erdős–Rényi graphs are resampled up to 100 times until connected. If
/// every attempt is disconnected the last sample is repaired by shuffling
/// its components and bridging each consecutive pair with a single edge
/// between uniformly chosen members, which keeps the result about as sparse
/// as the sample itself.
pub fn build_graph(kind: TopologyKind, n: usize, p: f64, rng: &mut RngStream) -> Result<Graph> {
    if n < 2 {
        return Err(Error::param("n", "need at least two nodes"));
    }
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Complete => (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect(),
        TopologyKind::Ring if n == 2 => vec![(0, 1)],
        TopologyKind::Ring => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        TopologyKind::Star => (1..n).map(|j| (0, j)).collect(),
        TopologyKind::ErdosRenyi => return erdos_renyi(n, p, rng),
    };
    Graph::from_edges(n, &edges)
}

fn erdos_renyi(n: usize, p: f64, rng: &mut RngStream) -> Result<Graph> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param("p", "edge probability must lie in (0, 1]"));
    }
    let mut sample = Graph { n, edges: Vec::new() };
    for _ in 0..ER_RESAMPLES {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.uniform() < p {
                    edges.push((i, j));
                }
            }
        }
        sample = Graph { n, edges };
        if sample.is_connected() {
            return Ok(sample);
        }
    }
    let mut comps = sample.components();
    rng.shuffle(&mut comps);
    let mut edges = sample.edges.clone();
    for pair in comps.windows(2) {
        let a = pair[0][rng.below(pair[0].len())];
        let b = pair[1][rng.below(pair[1].len())];
        edges.push((a, b));
    }
    let repaired = Graph::from_edges(n, &edges)?;
    if !repaired.is_connected() {
        return Err(Error::Disconnected);
    }
    Ok(repaired)
}

/// Symmetric doubly stochastic matrix supported on a graph, with its cached
/// spectral value λ.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    theta: Matrix,
    lambda: f64,
}

impl MixingMatrix {
    /// Wraps an arbitrary matrix after checking every mixing invariant
    /// against `graph`.
    pub fn new(theta: Matrix, graph: &Graph) -> Result<Self> {
        validate_mixing(&theta, graph)?;
        let lambda = spectral_value(&theta)?;
        Ok(Self { theta, lambda })
    }

    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn size(&self) -> usize {
        self.theta.rows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

fn validate_mixing(theta: &Matrix, graph: &Graph) -> Result<()> {
    let n = graph.node_count();
    if theta.rows() != n || theta.cols() != n {
        return Err(Error::Dimension(format!(
            "mixing matrix is {}x{}, graph has {n} nodes",
            theta.rows(),
            theta.cols()
        )));
    }
    let asym = theta.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::Asymmetric(asym));
    }
    for i in 0..n {
        let row_sum: f64 = theta.row(i).iter().sum();
        let col_sum: f64 = (0..n).map(|k| theta[(k, i)]).sum();
        if (row_sum - 1.0).abs() > STOCHASTIC_TOL || (col_sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::param(
                "theta",
                format!("row/column {i} sums to {row_sum}/{col_sum}"),
            ));
        }
        for j in 0..n {
            let v = theta[(i, j)];
            if v < 0.0 {
                return Err(Error::param("theta", format!("negative entry at ({i}, {j})")));
            }
            if i != j {
                let edge = graph.has_edge(i, j);
                if edge && v <= 0.0 {
                    return Err(Error::param("theta", format!("edge ({i}, {j}) has zero weight")));
                }
                if !edge && v != 0.0 {
                    return Err(Error::param("theta", format!("non-edge ({i}, {j}) has weight")));
                }
            }
        }
    }
    Ok(())
}

/// Metropolis–Hastings weights: `θ_ij = 1 / (1 + max(deg_i, deg_j))` on
/// edges and the residual mass on the diagonal.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix> {
    if g.node_count() == 0 {
        return Err(Error::param("graph", "empty graph"));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = g.node_count();
    let deg = g.degrees();
    let mut theta = Matrix::zeros(n, n);
    for &(i, j) in g.edges() {
        let w = 1.0 / (1 + deg[i].max(deg[j])) as f64;
        theta[(i, j)] = w;
        theta[(j, i)] = w;
    }
    if g.edge_count() == n * (n - 1) / 2 {
        // complete graph: every entry is 1/n, kept exact
        return MixingMatrix::new(Matrix::averaging(n), g);
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| theta[(i, j)]).sum();
        theta[(i, i)] = 1.0 - off;
    }
    MixingMatrix::new(theta, g)
}

/// `λ = max(|λ₂|, |λ_N|)` of a mixing matrix, checking that the leading
/// eigenvalue is 1.
pub fn lambda(m: &MixingMatrix) -> Result<f64> {
    spectral_value(&m.theta)
}

fn spectral_value(theta: &Matrix) -> Result<f64> {
    if *theta == Matrix::averaging(theta.rows()) {
        return Ok(0.0);
    }
    let eig = sym_eigvals(theta)?;
    if (eig[0] - 1.0).abs() > 1e-9 {
        return Err(Error::Numeric(format!(
            "leading eigenvalue {} of a mixing matrix is not 1",
            eig[0]
        )));
    }
    if eig.len() == 1 {
        return Ok(0.0);
    }
    Ok(eig[1].abs().max(eig[eig.len() - 1].abs()))
}

/// One row of [`contraction_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionRow {
    pub k: u32,
    /// `‖Θᵏ − P‖₂`
    pub norm: f64,
    /// `λᵏ`
    pub bound: f64,
}

impl ContractionRow {
    pub fn holds(&self, slack: f64) -> bool {
        self.norm <= self.bound + slack
    }
}

/// Tabulates `‖Θᵏ − P‖₂` against `λᵏ` for `k = 1..=k_max`, where `P` is the
/// averaging matrix.
pub fn contraction_check(m: &MixingMatrix, k_max: u32) -> Result<Vec<ContractionRow>> {
    if k_max == 0 {
        return Err(Error::param("k_max", "must be at least 1"));
    }
    let n = m.size();
    let avg = Matrix::averaging(n);
    let mut power = Matrix::identity(n);
    let mut rows = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max {
        power = power.matmul(&m.theta)?;
        let norm = spectral_norm(&power.sub(&avg)?)?;
        rows.push(ContractionRow {
            k,
            norm,
            bound: libm::pow(m.lambda, k as f64),
        });
    }
    Ok(rows)
}
