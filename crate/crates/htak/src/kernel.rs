//! Kernel values and Gram matrices.
//!
//! The kernel between two graphs counts, over every hierarchy level (h, k),
//! the vertex pairs assigned to a common prototype. Summed per level that
//! count equals the inner product of the two graphs' assignment histograms,
//! so the kernel is a sum of linear kernels and therefore positive
//! semidefinite. [`htak_pair_fast`] takes the inner-product route;
//! [`htak_pair_direct`] materializes correspondence matrices and counts
//! entries one by one, serving as the independent oracle.

use rayon::prelude::*;
use serde::Serialize;

use crate::align::{correspondence_matrix, AssignmentVector, FeatureBank};
use crate::error::{Error, Result};

/// How a Gram matrix run was requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GramMode {
    #[serde(rename = "single-H")]
    SingleH,
    #[serde(rename = "sweep")]
    Sweep,
}

/// Reproduction parameters attached to every Gram matrix.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub dataset: String,
    /// Levels summed into this matrix.
    pub h_levels: u32,
    /// Embedding depth actually used (after any cap).
    pub k_max: u32,
    /// Longest shortest path over the collection, before any cap.
    pub global_k: u32,
    pub ratio: f64,
    pub seed: u64,
    pub mode: GramMode,
}

/// Symmetric positive-semidefinite kernel matrix over a graph collection.
///
/// Values are exact pair counts; they become floating point only at export.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    size: usize,
    values: Vec<u64>,
    meta: RunMeta,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn value(&self, p: usize, q: usize) -> u64 {
        self.values[p * self.size + q]
    }

    pub fn value_f64(&self, p: usize, q: usize) -> f64 {
        self.value(p, q) as f64
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn meta(&self) -> &RunMeta {
        &self.meta
    }

    pub fn max_diagonal(&self) -> u64 {
        (0..self.size).map(|i| self.value(i, i)).max().unwrap_or(0)
    }

    /// Cosine-normalized entry `k_pq / sqrt(k_pp * k_qq)`; zero diagonals
    /// normalize to zero.
    pub fn normalized_value(&self, p: usize, q: usize) -> f64 {
        let denom = self.value_f64(p, p) * self.value_f64(q, q);
        if denom == 0.0 {
            return 0.0;
        }
        self.value_f64(p, q) / denom.sqrt()
    }
}

fn check_compatible(a: &FeatureBank, b: &FeatureBank) -> Result<()> {
    if a.fingerprint() != b.fingerprint() {
        return Err(Error::InvalidArgument(format!(
            "feature banks come from different runs (fingerprints {:#x} vs {:#x})",
            a.fingerprint(),
            b.fingerprint()
        )));
    }
    if a.level_count() != b.level_count() || a.k_max() != b.k_max() {
        return Err(Error::InvalidArgument(
            "feature banks have different level shapes".into(),
        ));
    }
    Ok(())
}

pub(crate) fn pair_fast_up_to(a: &FeatureBank, b: &FeatureBank, h_levels: u32) -> u64 {
    let mut total = 0u64;
    for k in 1..=a.k_max() {
        for h in 1..=h_levels as usize {
            let (ca, cb) = (a.counts(h, k), b.counts(h, k));
            total += ca
                .iter()
                .zip(cb)
                .map(|(&x, &y)| x as u64 * y as u64)
                .sum::<u64>();
        }
    }
    total
}

/// Kernel value via feature-vector inner products, summing every level of
/// the banks. Exact integer arithmetic.
pub fn htak_pair_fast(a: &FeatureBank, b: &FeatureBank) -> Result<u64> {
    check_compatible(a, b)?;
    Ok(pair_fast_up_to(a, b, a.level_count() as u32))
}

/// Kernel value by materializing every correspondence matrix and counting
/// its entries: the slow, definition-level oracle for [`htak_pair_fast`].
///
/// Both slices must cover the same (h, k) levels.
pub fn htak_pair_direct(a: &[AssignmentVector], b: &[AssignmentVector]) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "assignment sets differ in size: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut sorted_a: Vec<&AssignmentVector> = a.iter().collect();
    let mut sorted_b: Vec<&AssignmentVector> = b.iter().collect();
    sorted_a.sort_by_key(|v| v.level());
    sorted_b.sort_by_key(|v| v.level());
    let mut total = 0u64;
    for (va, vb) in sorted_a.iter().zip(&sorted_b) {
        total += correspondence_matrix(va, vb)?.count_ones();
    }
    Ok(total)
}

/// Assemble the Gram matrix over all banks, summing levels `1..=h_levels`.
pub fn gram_from_banks(banks: &[FeatureBank], h_levels: u32, meta: RunMeta) -> Result<GramMatrix> {
    if banks.is_empty() {
        return Err(Error::InvalidArgument("empty graph collection".into()));
    }
    for b in banks {
        check_compatible(&banks[0], b)?;
    }
    if h_levels < 1 || h_levels as usize > banks[0].level_count() {
        return Err(Error::InvalidArgument(format!(
            "h_levels {h_levels} outside 1..={}",
            banks[0].level_count()
        )));
    }
    let size = banks.len();
    let rows: Vec<Vec<u64>> = (0..size)
        .into_par_iter()
        .map(|p| {
            (p..size)
                .map(|q| pair_fast_up_to(&banks[p], &banks[q], h_levels))
                .collect()
        })
        .collect();
    let mut values = vec![0u64; size * size];
    for (p, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let q = p + off;
            values[p * size + q] = v;
            values[q * size + p] = v;
        }
    }
    Ok(GramMatrix { size, values, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{assign_nearest, feature_bank};
    use crate::db::db_table;
    use crate::graph::Graph;
    use crate::prototype::{build_hierarchy, level0_points, PrototypeHierarchy};

    fn meta(h: u32) -> RunMeta {
        RunMeta {
            dataset: "test".into(),
            h_levels: h,
            k_max: 1,
            global_k: 1,
            ratio: 0.2,
            seed: 0,
            mode: GramMode::SingleH,
        }
    }

    fn bank_for(
        graph: &Graph,
        id: u32,
        hiers: &[PrototypeHierarchy],
        levels: usize,
        fingerprint: u64,
    ) -> FeatureBank {
        let mut graph = graph.clone();
        graph.set_id(id);
        let k_max = hiers.len() as u32;
        let table = db_table(&graph, k_max).unwrap();
        let assignments: Vec<_> = hiers
            .iter()
            .flat_map(|hr| (1..=levels).map(move |h| assign_nearest(&table, hr, h).unwrap()))
            .collect();
        feature_bank(&assignments, levels, k_max, fingerprint).unwrap()
    }

    fn toy_setup() -> (Vec<Graph>, Vec<PrototypeHierarchy>, Vec<FeatureBank>) {
        let graphs = vec![
            Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap(),
            Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap(),
            Graph::from_edges(5, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)]).unwrap(),
        ];
        let mut tables = Vec::new();
        for (i, g) in graphs.iter().enumerate() {
            let mut g = g.clone();
            g.set_id(i as u32);
            tables.push(db_table(&g, 2).unwrap());
        }
        let hiers: Vec<_> = (1..=2u32)
            .map(|k| build_hierarchy(&level0_points(&tables, k), 3, 0.4, 11).unwrap())
            .collect();
        let banks: Vec<_> = graphs
            .iter()
            .enumerate()
            .map(|(i, g)| bank_for(g, i as u32, &hiers, 3, 42))
            .collect();
        (graphs, hiers, banks)
    }

    #[test]
    fn self_kernel_is_sum_of_squared_norms() {
        let (_, _, banks) = toy_setup();
        let b = &banks[0];
        let expected: u64 = (1..=b.k_max())
            .flat_map(|k| (1..=b.level_count()).map(move |h| (h, k)))
            .map(|(h, k)| b.counts(h, k).iter().map(|&c| c as u64 * c as u64).sum::<u64>())
            .sum();
        assert_eq!(htak_pair_fast(b, b).unwrap(), expected);
    }

    #[test]
    fn zero_valid_vertices_zero_kernel() {
        let edgeless = Graph::empty(3);
        let connected = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut tables = Vec::new();
        for (i, g) in [&edgeless, &connected].iter().enumerate() {
            let mut g = (*g).clone();
            g.set_id(i as u32);
            tables.push(db_table(&g, 2).unwrap());
        }
        let hiers: Vec<_> = (1..=2u32)
            .map(|k| build_hierarchy(&level0_points(&tables, k), 2, 0.5, 1).unwrap())
            .collect();
        let ba = bank_for(&edgeless, 0, &hiers, 2, 7);
        let bb = bank_for(&connected, 1, &hiers, 2, 7);
        assert_eq!(htak_pair_fast(&ba, &bb).unwrap(), 0);
        assert_eq!(htak_pair_fast(&ba, &ba).unwrap(), 0);
    }

    #[test]
    fn fingerprint_mismatch_is_an_error() {
        let (graphs, hiers, _) = toy_setup();
        let a = bank_for(&graphs[0], 0, &hiers, 3, 1);
        let b = bank_for(&graphs[1], 1, &hiers, 3, 2);
        assert!(htak_pair_fast(&a, &b).is_err());
    }

    #[test]
    fn fast_equals_direct() {
        let (graphs, hiers, banks) = toy_setup();
        let assignments: Vec<Vec<_>> = graphs
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mut g = g.clone();
                g.set_id(i as u32);
                let t = db_table(&g, 2).unwrap();
                hiers
                    .iter()
                    .flat_map(|hr| (1..=3).map(move |h| assign_nearest(&t, hr, h).unwrap()))
                    .collect()
            })
            .collect();
        for p in 0..graphs.len() {
            for q in 0..graphs.len() {
                let fast = htak_pair_fast(&banks[p], &banks[q]).unwrap();
                let direct = htak_pair_direct(&assignments[p], &assignments[q]).unwrap();
                assert_eq!(fast, direct, "pair ({p}, {q})");
            }
        }
    }

    #[test]
    fn single_shared_vertex_counts_every_level() {
        // Two single-edge graphs: identical embeddings, so each of the two
        // valid vertices pairs with both vertices of the other graph at
        // every (h, k): kernel = H * K * 4.
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let mut tables = Vec::new();
        for i in 0..2u32 {
            let mut gi = g.clone();
            gi.set_id(i);
            tables.push(db_table(&gi, 1).unwrap());
        }
        let hier = build_hierarchy(&level0_points(&tables, 1), 2, 0.3, 0).unwrap();
        let hiers = vec![hier];
        let a = bank_for(&g, 0, &hiers, 2, 3);
        let b = bank_for(&g, 1, &hiers, 2, 3);
        assert_eq!(htak_pair_fast(&a, &b).unwrap(), 2 * 1 * 4);
    }

    #[test]
    fn gram_isomorphic_graphs_match_self_kernel() {
        let g1 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let g2 = Graph::from_edges(4, &[(3, 2), (2, 1), (1, 0)]).unwrap();
        let mut tables = Vec::new();
        for (i, g) in [&g1, &g2].iter().enumerate() {
            let mut g = (*g).clone();
            g.set_id(i as u32);
            tables.push(db_table(&g, 3).unwrap());
        }
        let hiers: Vec<_> = (1..=3u32)
            .map(|k| build_hierarchy(&level0_points(&tables, k), 2, 0.4, 9).unwrap())
            .collect();
        let banks: Vec<_> = [&g1, &g2]
            .iter()
            .enumerate()
            .map(|(i, g)| bank_for(g, i as u32, &hiers, 2, 5))
            .collect();
        let gram = gram_from_banks(&banks, 2, meta(2)).unwrap();
        assert_eq!(gram.value(0, 1), gram.value(0, 0));
        assert_eq!(gram.value(0, 1), gram.value(1, 1));
    }

    #[test]
    fn gram_single_graph() {
        let (_, _, banks) = toy_setup();
        let gram = gram_from_banks(&banks[..1], 3, meta(3)).unwrap();
        assert_eq!(gram.size(), 1);
        assert_eq!(gram.value(0, 0), htak_pair_fast(&banks[0], &banks[0]).unwrap());
    }

    #[test]
    fn gram_is_symmetric_and_monotone_in_h() {
        let (_, _, banks) = toy_setup();
        let g2 = gram_from_banks(&banks, 2, meta(2)).unwrap();
        let g3 = gram_from_banks(&banks, 3, meta(3)).unwrap();
        for p in 0..banks.len() {
            for q in 0..banks.len() {
                assert_eq!(g2.value(p, q), g2.value(q, p));
                assert!(g3.value(p, q) >= g2.value(p, q));
            }
        }
    }

    #[test]
    fn gram_cauchy_schwarz() {
        let (_, _, banks) = toy_setup();
        let g = gram_from_banks(&banks, 3, meta(3)).unwrap();
        for p in 0..g.size() {
            for q in 0..g.size() {
                let lhs = g.value(p, q) as u128 * g.value(p, q) as u128;
                let rhs = g.value(p, p) as u128 * g.value(q, q) as u128;
                assert!(lhs <= rhs);
            }
        }
    }

    #[test]
    fn self_kernel_bounds() {
        let (graphs, _, banks) = toy_setup();
        for (g, b) in graphs.iter().zip(&banks) {
            let self_kernel = htak_pair_fast(b, b).unwrap();
            let n = g.vertex_count() as u64;
            assert!(self_kernel <= 3 * 2 * n * n); // H * K * |V|^2
        }
    }

    #[test]
    fn empty_bank_list_is_an_error() {
        assert!(gram_from_banks(&[], 1, meta(1)).is_err());
    }
}
