//! Communication topology, Laplacian, and consensus weight matrices.
//!
//! Agents only ever see their own row of a [`WeightMatrix`]. The dense
//! exports exist for spectral validation and tests, never for agent updates.
//!
//! The continuous-time Laplacian flow `x' = -L x` drives any initial vector
//! to the average of its entries on a connected graph. Only the discrete
//! iterations in [`crate::consensus`] are implemented; the Laplacian here is
//! used for connectivity checks.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub type NodeId = usize;

/// Eigenvalues below this magnitude are treated as zero.
pub const EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must contain at least one node")]
    EmptyGraph,
    #[error("edge endpoint {node} out of range for {node_count} nodes")]
    NodeOutOfRange { node: NodeId, node_count: usize },
    #[error("self-loop at node {node}")]
    SelfLoop { node: NodeId },
    #[error("duplicate edge ({a}, {b})")]
    DuplicateEdge { a: NodeId, b: NodeId },
    #[error("communication graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("Mean-Metropolis epsilon must be positive, got {epsilon}")]
    NonPositiveEpsilon { epsilon: f64 },
    #[error("size discovery did not terminate within {rounds} rounds")]
    NonTermination { rounds: usize },
}

/// Undirected simple graph over nodes `0..node_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommGraph {
    node_count: usize,
    edges: Vec<(NodeId, NodeId)>,
    neighbors: Vec<Vec<NodeId>>,
}

impl CommGraph {
    /// Builds a graph, rejecting self-loops and repeated edges.
    pub fn new<I>(node_count: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        Self::build(node_count, edges, false)
    }

    /// Builds a graph, silently collapsing repeated edges (parallel lines in
    /// a power network). Self-loops are still rejected.
    pub fn from_edges_dedup<I>(node_count: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        Self::build(node_count, edges, true)
    }

    fn build<I>(node_count: usize, edges: I, dedup: bool) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        if node_count == 0 {
            return Err(GraphError::EmptyGraph);
        }
        let mut list = Vec::new();
        for (a, b) in edges {
            for node in [a, b] {
                if node >= node_count {
                    return Err(GraphError::NodeOutOfRange { node, node_count });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop { node: a });
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        if !dedup {
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::DuplicateEdge {
                    a: w[0].0,
                    b: w[0].1,
                });
            }
        }
        list.dedup();
        let mut neighbors = vec![Vec::new(); node_count];
        for &(a, b) in &list {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges: list,
            neighbors,
        })
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("path graph is simple")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 nodes");
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n))).expect("cycle graph is simple")
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
        Self::new(n, edges).expect("complete graph is simple")
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(min, max)` pairs in sorted order.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.neighbors[node].len()
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Hop distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.node_count];
        let mut count = 0;
        for start in 0..self.node_count {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(u) = stack.pop() {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// Longest shortest path; `None` if disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 0..self.node_count {
            for d in self.bfs_distances(s) {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    pub fn is_bipartite(&self) -> bool {
        let mut color: Vec<Option<bool>> = vec![None; self.node_count];
        for start in 0..self.node_count {
            if color[start].is_some() {
                continue;
            }
            color[start] = Some(false);
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                let cu = color[u].unwrap_or(false);
                for &v in &self.neighbors[u] {
                    match color[v] {
                        None => {
                            color[v] = Some(!cu);
                            queue.push_back(v);
                        }
                        Some(cv) if cv == cu => return false,
                        Some(_) => {}
                    }
                }
            }
        }
        true
    }

    pub fn is_regular(&self) -> bool {
        let d0 = self.degree(0);
        (0..self.node_count).all(|i| self.degree(i) == d0)
    }

    fn require_connected(&self) -> Result<(), GraphError> {
        match self.component_count() {
            1 => Ok(()),
            components => Err(GraphError::DisconnectedGraph { components }),
        }
    }
}

/// Graph Laplacian `D - A`.
pub fn build_laplacian<T: Real>(g: &CommGraph) -> DMatrix<T> {
    let n = g.node_count();
    let mut l = DMatrix::from_element(n, n, T::zero());
    for i in 0..n {
        l[(i, i)] = T::from_count(g.degree(i));
        for &j in g.neighbors(i) {
            l[(i, j)] = -T::one();
        }
    }
    l
}

fn to_f64_matrix<T: Real>(m: &DMatrix<T>) -> DMatrix<f64> {
    m.map(|x| x.to_f64_lossy())
}

/// Ascending eigenvalues of a symmetric matrix, computed in `f64`.
pub fn symmetric_eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<f64> {
    let eig = nalgebra::SymmetricEigen::try_new(to_f64_matrix(m), 1e-14, 0)
        .expect("symmetric eigen decomposition converges");
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Second-smallest Laplacian eigenvalue. Values within [`EIGEN_TOL`] of zero
/// are returned as exactly zero. A single-node Laplacian has no second
/// eigenvalue and yields zero.
pub fn algebraic_connectivity<T: Real>(laplacian: &DMatrix<T>) -> T {
    let values = symmetric_eigenvalues(laplacian);
    let lambda2 = values.get(1).copied().unwrap_or(0.0);
    if lambda2.abs() < EIGEN_TOL {
        T::zero()
    } else {
        T::lit(lambda2)
    }
}

/// One agent's row of the mixing matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalWeights<T> {
    pub self_weight: T,
    /// `(neighbor id, weight)` sorted by neighbor id.
    pub neighbors: Vec<(NodeId, T)>,
}

impl<T: Real> LocalWeights<T> {
    pub fn row_sum(&self) -> T {
        self.self_weight + self.neighbors.iter().map(|&(_, w)| w).sum::<T>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// `1 / max(d_i, d_j)` on edges.
    Metropolis,
    /// `2 / (d_i + d_j + eps)` on edges.
    MeanMetropolis,
}

/// Sparse consensus mixing matrix, stored per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix<T> {
    rows: Vec<LocalWeights<T>>,
}

impl<T: Real> WeightMatrix<T> {
    pub fn from_rows(rows: Vec<LocalWeights<T>>) -> Self {
        Self { rows }
    }

    /// Builds a matrix from a dense square array, keeping nonzero off-diagonal
    /// entries as neighbor weights.
    pub fn from_dense(dense: &DMatrix<T>) -> Self {
        assert_eq!(dense.nrows(), dense.ncols(), "weight matrix must be square");
        let n = dense.nrows();
        let rows = (0..n)
            .map(|i| LocalWeights {
                self_weight: dense[(i, i)],
                neighbors: (0..n)
                    .filter(|&j| j != i && dense[(i, j)] != T::zero())
                    .map(|j| (j, dense[(i, j)]))
                    .collect(),
            })
            .collect();
        Self { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: NodeId) -> &LocalWeights<T> {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[LocalWeights<T>] {
        &self.rows
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> T {
        let row = &self.rows[i];
        if i == j {
            return row.self_weight;
        }
        row.neighbors
            .binary_search_by_key(&j, |&(id, _)| id)
            .map(|k| row.neighbors[k].1)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut m = DMatrix::from_element(n, n, T::zero());
        for (i, row) in self.rows.iter().enumerate() {
            m[(i, i)] = row.self_weight;
            for &(j, w) in &row.neighbors {
                m[(i, j)] = w;
            }
        }
        m
    }

    /// Exact symmetry of stored entries.
    pub fn is_symmetric(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, row)| {
            row.neighbors
                .iter()
                .all(|&(j, w)| j < self.dim() && self.get(j, i) == w)
        })
    }
}

fn degree_weights<T, F>(g: &CommGraph, edge_weight: F) -> WeightMatrix<T>
where
    T: Real,
    F: Fn(usize, usize) -> T,
{
    let rows = (0..g.node_count())
        .map(|i| {
            let neighbors: Vec<(NodeId, T)> = g
                .neighbors(i)
                .iter()
                .map(|&j| (j, edge_weight(g.degree(i), g.degree(j))))
                .collect();
            let off: T = neighbors.iter().map(|&(_, w)| w).sum();
            LocalWeights {
                self_weight: T::one() - off,
                neighbors,
            }
        })
        .collect();
    WeightMatrix { rows }
}

/// Local-degree (Metropolis) weights.
///
/// On connected graphs that are both regular and bipartite (a single edge,
/// even cycles) every self weight is zero and the matrix has eigenvalue -1,
/// so [`validate_consensus_matrix`] will flag it as non-mixing.
pub fn metropolis_weights<T: Real>(g: &CommGraph) -> Result<WeightMatrix<T>, GraphError> {
    g.require_connected()?;
    Ok(degree_weights(g, |di, dj| {
        T::one() / T::from_count(di.max(dj))
    }))
}

/// Mean-Metropolis weights with smoothing `epsilon`.
pub fn mean_metropolis_weights<T: Real>(
    g: &CommGraph,
    epsilon: T,
) -> Result<WeightMatrix<T>, GraphError> {
    if !(epsilon > T::zero()) {
        return Err(GraphError::NonPositiveEpsilon {
            epsilon: epsilon.to_f64_lossy(),
        });
    }
    g.require_connected()?;
    let two = T::lit(2.0);
    Ok(degree_weights(g, |di, dj| {
        two / (T::from_count(di) + T::from_count(dj) + epsilon)
    }))
}

pub fn build_weights<T: Real>(
    g: &CommGraph,
    scheme: WeightScheme,
    epsilon: T,
) -> Result<WeightMatrix<T>, GraphError> {
    match scheme {
        WeightScheme::Metropolis => metropolis_weights(g),
        WeightScheme::MeanMetropolis => mean_metropolis_weights(g, epsilon),
    }
}

/// Outcome of checking the three average-consensus conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsensusMatrixReport {
    pub row_stochastic: bool,
    pub col_stochastic: bool,
    /// Spectral radius of `W - 11^T / N`.
    pub spectral_radius_gap: f64,
}

impl ConsensusMatrixReport {
    pub fn is_valid(&self) -> bool {
        self.row_stochastic && self.col_stochastic && self.spectral_radius_gap < 1.0 - EIGEN_TOL
    }
}

/// Tolerance on row and column sums for a matrix of dimension `n`.
pub fn stochastic_tolerance<T: Real>(n: usize) -> f64 {
    1e-12_f64.max(T::epsilon().to_f64_lossy() * 16.0 * n as f64)
}

/// Spectral radius of a square matrix, computed in `f64`.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> f64 {
    let m = to_f64_matrix(m);
    if m.nrows() == 0 {
        return 0.0;
    }
    if m == m.transpose() {
        symmetric_eigenvalues(&m)
            .into_iter()
            .fold(0.0, |acc, v| acc.max(v.abs()))
    } else {
        m.complex_eigenvalues()
            .iter()
            .fold(0.0, |acc, v| acc.max(v.norm()))
    }
}

pub fn validate_consensus_matrix<T: Real>(w: &WeightMatrix<T>) -> ConsensusMatrixReport {
    let dense = w.to_dense();
    let n = dense.nrows();
    let tol = stochastic_tolerance::<T>(n);
    let row_stochastic = (0..n).all(|i| {
        let s: f64 = dense.row(i).iter().map(|x| x.to_f64_lossy()).sum();
        (s - 1.0).abs() <= tol
    });
    let col_stochastic = (0..n).all(|j| {
        let s: f64 = dense.column(j).iter().map(|x| x.to_f64_lossy()).sum();
        (s - 1.0).abs() <= tol
    });
    let inv_n = if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let shifted = to_f64_matrix(&dense).map(|x| x - inv_n);
    ConsensusMatrixReport {
        row_stochastic,
        col_stochastic,
        spectral_radius_gap: spectral_radius(&shifted),
    }
}

/// Result of synchronous flooding of known node ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeDiscovery {
    /// Number of distinct ids each node has heard of.
    pub counts: Vec<usize>,
    /// Rounds in which at least one node learned a new id.
    pub rounds: usize,
}

/// Every node starts knowing only its own id and, each round, merges the id
/// sets its neighbors held at the end of the previous round.
pub fn discover_size(g: &CommGraph) -> Result<SizeDiscovery, GraphError> {
    g.require_connected()?;
    let n = g.node_count();
    let words = n.div_ceil(64);
    let mut known: Vec<Vec<u64>> = (0..n)
        .map(|i| {
            let mut set = vec![0u64; words];
            set[i / 64] |= 1 << (i % 64);
            set
        })
        .collect();
    let mut rounds = 0;
    loop {
        let mut next = known.clone();
        let mut changed = false;
        for (i, row) in next.iter_mut().enumerate() {
            for &j in g.neighbors(i) {
                for (dst, src) in row.iter_mut().zip(&known[j]) {
                    let merged = *dst | *src;
                    changed |= merged != *dst;
                    *dst = merged;
                }
            }
        }
        if !changed {
            break;
        }
        known = next;
        rounds += 1;
        if rounds > n {
            return Err(GraphError::NonTermination { rounds });
        }
    }
    let counts = known
        .iter()
        .map(|set| set.iter().map(|w| w.count_ones() as usize).sum())
        .collect();
    Ok(SizeDiscovery { counts, rounds })
}
