//! Depth-based vertex embeddings.
//!
//! Each vertex is described by the Shannon entropies of its expansion
//! subgraphs at radii 1..K: the induced subgraph on all vertices within
//! hop distance r of the root. The entropy is that of the steady-state
//! random walk, whose stationary probability at a vertex is proportional
//! to its degree. Radii beyond the root's eccentricity add nothing (the
//! subgraph has already reached the root's whole component), so those
//! cells are marked invalid and excluded from every downstream consumer.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{DistanceRow, Graph};

/// Vertices within a fixed hop distance of a root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSet {
    pub root: u32,
    pub radius: u32,
    /// Sorted vertex indices with `d(root, v) <= radius`, root included.
    pub members: Vec<u32>,
}

impl LayerSet {
    pub fn from_distances(row: &DistanceRow, radius: u32) -> LayerSet {
        let members = (0..row.raw().len() as u32)
            .filter(|&v| matches!(row.get(v), Some(d) if d <= radius))
            .collect();
        LayerSet {
            root: row.source(),
            radius,
            members,
        }
    }
}

/// Vertex-induced subgraph on the layer set of `root` at `radius`,
/// with vertices re-indexed densely in ascending original order.
///
/// Once `radius` reaches the root's eccentricity the result is the root's
/// whole connected component and stops growing.
pub fn expansion_subgraph(graph: &Graph, root: u32, radius: u32) -> Result<Graph> {
    if radius < 1 {
        return Err(Error::InvalidArgument("expansion radius must be >= 1".into()));
    }
    let row = graph.bfs_distances(root)?;
    let layer = LayerSet::from_distances(&row, radius);
    let mut dense = vec![u32::MAX; graph.vertex_count()];
    for (i, &v) in layer.members.iter().enumerate() {
        dense[v as usize] = i as u32;
    }
    let mut edges = Vec::new();
    for &v in &layer.members {
        for &u in graph.neighbors(v) {
            if v < u && dense[u as usize] != u32::MAX {
                edges.push((dense[v as usize], dense[u as usize]));
            }
        }
    }
    Graph::from_edges(layer.members.len(), &edges)
}

/// Shannon entropy (nats) of the degree-proportional stationary
/// distribution, computed from a degree histogram so the value depends
/// only on the degree multiset: with D the total degree,
/// H = ln D - (1/D) * sum_d count(d) * d * ln d. Zero-degree vertices
/// carry no probability mass; a graph with no edges has entropy 0.
fn entropy_from_degree_counts(counts: &[u32]) -> f64 {
    let mut total: u64 = 0;
    for (d, &c) in counts.iter().enumerate().skip(1) {
        total += d as u64 * c as u64;
    }
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let mut weighted_log = 0.0;
    for (d, &c) in counts.iter().enumerate().skip(1) {
        if c > 0 {
            let d = d as f64;
            weighted_log += c as f64 * d * d.ln();
        }
    }
    // Clamp away negative floating-point dust; entropy is non-negative.
    (total.ln() - weighted_log / total).max(0.0)
}

/// Steady-state random-walk entropy of a graph, in nats.
pub fn steady_state_entropy(graph: &Graph) -> f64 {
    let n = graph.vertex_count();
    let mut counts = vec![0u32; n.max(1)];
    for v in 0..n as u32 {
        counts[graph.degree(v)] += 1;
    }
    entropy_from_degree_counts(&counts)
}

/// Per-vertex expansion-subgraph entropies at radii `1..=k_max`.
///
/// Cell `(v, k)` is valid exactly when some vertex lies at distance
/// exactly `k` from `v`; validity is therefore a prefix of each row,
/// ending at the vertex's eccentricity within its component.
#[derive(Debug, Clone, PartialEq)]
pub struct DbTable {
    graph_id: u32,
    vertex_count: usize,
    k_max: u32,
    /// Row-major `vertex_count x k_max`; invalid cells hold NaN.
    entropies: Vec<f64>,
    valid_len: Vec<u32>,
}

impl DbTable {
    pub fn graph_id(&self) -> u32 {
        self.graph_id
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// Number of leading valid cells in the row of `v`.
    pub fn valid_len(&self, v: usize) -> u32 {
        self.valid_len[v]
    }

    pub fn is_valid(&self, v: usize, k: u32) -> bool {
        k >= 1 && k <= self.valid_len[v]
    }

    pub fn entropy(&self, v: usize, k: u32) -> Option<f64> {
        if !self.is_valid(v, k) {
            return None;
        }
        let value = self.entropies[v * self.k_max as usize + (k - 1) as usize];
        debug_assert!(!value.is_nan());
        Some(value)
    }

    /// The k-dimensional embedding of vertex `v`: entropies at radii
    /// `1..=k`. `None` unless the cell `(v, k)` is valid.
    pub fn prefix(&self, v: usize, k: u32) -> Option<&[f64]> {
        if !self.is_valid(v, k) {
            return None;
        }
        let start = v * self.k_max as usize;
        Some(&self.entropies[start..start + k as usize])
    }
}

/// Build the depth-based table of `graph` with `k_max` columns.
///
/// One BFS per vertex; all layer sets derive from that single distance
/// row, and induced degrees are maintained incrementally shell by shell.
pub fn db_table(graph: &Graph, k_max: u32) -> Result<DbTable> {
    if k_max < 1 {
        return Err(Error::InvalidArgument("k_max must be >= 1".into()));
    }
    let n = graph.vertex_count();
    let rows: Vec<(Vec<f64>, u32)> = (0..n as u32)
        .into_par_iter()
        .map(|root| vertex_row(graph, root, k_max))
        .collect();

    let mut entropies = Vec::with_capacity(n * k_max as usize);
    let mut valid_len = Vec::with_capacity(n);
    for (row, len) in rows {
        entropies.extend_from_slice(&row);
        valid_len.push(len);
    }
    Ok(DbTable {
        graph_id: graph.id(),
        vertex_count: n,
        k_max,
        entropies,
        valid_len,
    })
}

fn vertex_row(graph: &Graph, root: u32, k_max: u32) -> (Vec<f64>, u32) {
    let n = graph.vertex_count();
    let row = graph.bfs_distances(root).expect("root in range");
    let ecc = row.max_finite();
    let valid = ecc.min(k_max);

    let mut entropies = vec![f64::NAN; k_max as usize];
    if valid == 0 {
        return (entropies, 0);
    }

    // Vertices bucketed by exact distance; shells 1..=valid drive the
    // incremental expansion.
    let mut shells: Vec<Vec<u32>> = vec![Vec::new(); valid as usize + 1];
    for v in 0..n as u32 {
        if let Some(d) = row.get(v) {
            if d <= valid {
                shells[d as usize].push(v);
            }
        }
    }

    let mut in_set = vec![false; n];
    let mut degree = vec![0u32; n];
    let mut counts = vec![0u32; n]; // histogram over induced degrees
    in_set[root as usize] = true;
    counts[0] = 1;

    let mut bump = |counts: &mut [u32], degree: &mut [u32], w: u32| {
        let d = degree[w as usize] as usize;
        counts[d] -= 1;
        counts[d + 1] += 1;
        degree[w as usize] += 1;
    };

    for k in 1..=valid {
        for &v in &shells[k as usize] {
            in_set[v as usize] = true;
            counts[0] += 1;
        }
        for &v in &shells[k as usize] {
            for &u in graph.neighbors(v) {
                if !in_set[u as usize] {
                    continue;
                }
                let du = row.get(u).expect("member is reachable");
                // Count each new induced edge once: earlier-shell endpoints
                // always, same-shell pairs only from the lower index.
                if du < k || (du == k && u < v) {
                    bump(&mut counts, &mut degree, u);
                    bump(&mut counts, &mut degree, v);
                }
            }
        }
        entropies[(k - 1) as usize] = entropy_from_degree_counts(&counts);
    }
    (entropies, valid)
}
