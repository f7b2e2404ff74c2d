//! Undirected simple graphs, collections of them, and BFS shortest paths.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Marker for vertex pairs with no connecting path.
pub const UNREACHABLE: u32 = u32::MAX;

/// An undirected, unlabeled simple graph with an optional class label.
///
/// Vertices are `0..vertex_count`; adjacency lists are sorted, symmetric,
/// and free of self-loops and duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    id: u32,
    label: Option<i64>,
    adj: Vec<Vec<u32>>,
}

impl Graph {
    /// Build a graph from undirected edges. Edges may be given in either or
    /// both directions; duplicates and self-loops are collapsed silently.
    pub fn from_edges(vertex_count: usize, edges: &[(u32, u32)]) -> Result<Graph> {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); vertex_count];
        for &(u, v) in edges {
            if u as usize >= vertex_count || v as usize >= vertex_count {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {v}) references a vertex outside 0..{vertex_count}"
                )));
            }
            if u == v {
                continue;
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Graph {
            id: 0,
            label: None,
            adj,
        })
    }

    pub fn empty(vertex_count: usize) -> Graph {
        Graph {
            id: 0,
            label: None,
            adj: vec![Vec::new(); vertex_count],
        }
    }

    pub fn with_label(mut self, label: i64) -> Graph {
        self.label = Some(label);
        self
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub(crate) fn set_id(&mut self, id: u32) {
        self.id = id;
    }

    pub fn label(&self) -> Option<i64> {
        self.label
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adj[v as usize].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges as `(u, v)` pairs with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, list)| {
            let u = u as u32;
            list.iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Hop distances from `source` to every vertex. Vertices in other
    /// connected components are marked [`UNREACHABLE`].
    pub fn bfs_distances(&self, source: u32) -> Result<DistanceRow> {
        let n = self.vertex_count();
        if source as usize >= n {
            return Err(Error::InvalidArgument(format!(
                "BFS source {source} outside 0..{n}"
            )));
        }
        let mut dist = vec![UNREACHABLE; n];
        dist[source as usize] = 0;
        let mut queue = VecDeque::with_capacity(n);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize];
            for &v in self.neighbors(u) {
                if dist[v as usize] == UNREACHABLE {
                    dist[v as usize] = du + 1;
                    queue.push_back(v);
                }
            }
        }
        Ok(DistanceRow {
            source,
            distances: dist,
        })
    }
}

/// BFS distances from a single source vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceRow {
    source: u32,
    distances: Vec<u32>,
}

impl DistanceRow {
    pub fn source(&self) -> u32 {
        self.source
    }

    /// Hop count to `v`, or `None` when `v` is unreachable.
    pub fn get(&self, v: u32) -> Option<u32> {
        let d = self.distances[v as usize];
        (d != UNREACHABLE).then_some(d)
    }

    /// Raw distances with [`UNREACHABLE`] markers left in place.
    pub fn raw(&self) -> &[u32] {
        &self.distances
    }

    /// Largest finite distance in the row (the source's eccentricity
    /// within its component).
    pub fn max_finite(&self) -> u32 {
        self.distances
            .iter()
            .copied()
            .filter(|&d| d != UNREACHABLE)
            .max()
            .unwrap_or(0)
    }
}

/// An ordered set of graphs sharing one embedding dimension bound.
///
/// `global_k` is always computed from the data: it is the longest finite
/// shortest path between any vertex pair within a single member graph.
#[derive(Debug, Clone)]
pub struct GraphCollection {
    name: String,
    graphs: Vec<Graph>,
    global_k: u32,
}

impl GraphCollection {
    /// Assemble a collection, assigning serial ids `0..T-1` in list order
    /// and computing `global_k` by an all-pairs BFS sweep.
    pub fn new(name: impl Into<String>, mut graphs: Vec<Graph>) -> Result<GraphCollection> {
        if graphs.is_empty() {
            return Err(Error::InvalidArgument("empty graph collection".into()));
        }
        for (i, g) in graphs.iter_mut().enumerate() {
            g.set_id(i as u32);
        }
        let global_k = compute_global_k(&graphs)?;
        Ok(GraphCollection {
            name: name.into(),
            graphs,
            global_k,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn graph(&self, id: usize) -> &Graph {
        &self.graphs[id]
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn global_k(&self) -> u32 {
        self.global_k
    }

    /// Class labels for all graphs, or `None` unless every graph is labeled.
    pub fn labels(&self) -> Option<Vec<i64>> {
        self.graphs.iter().map(Graph::label).collect()
    }

    pub fn total_vertices(&self) -> usize {
        self.graphs.iter().map(Graph::vertex_count).sum()
    }
}

/// Longest finite shortest path within any single graph of the slice.
///
/// Errors with [`Error::NoFiniteEccentricity`] when every graph is edgeless,
/// since no embedding of dimension >= 1 exists in that case.
pub fn compute_global_k(graphs: &[Graph]) -> Result<u32> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("empty graph collection".into()));
    }
    let max = graphs
        .par_iter()
        .map(|g| {
            (0..g.vertex_count() as u32)
                .map(|v| g.bfs_distances(v).expect("source in range").max_finite())
                .max()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0);
    if max == 0 {
        return Err(Error::NoFiniteEccentricity);
    }
    Ok(max)
}
