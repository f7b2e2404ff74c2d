//! Vertex-to-prototype alignment.
//!
//! Every valid vertex embedding is assigned to its nearest level-h
//! prototype (lowest index on ties). Two vertices anywhere in the
//! collection correspond at level (h, k) exactly when they share an
//! assigned prototype, which makes the correspondence relation transitive
//! by construction. Per-graph histograms of assignments are the feature
//! vectors the kernel reduces to; pairwise correspondence matrices exist
//! for diagnostics and as the slow oracle, never on the production path.

use crate::db::DbTable;
use crate::error::{Error, Result};
use crate::prototype::PrototypeHierarchy;

/// Euclidean distances from each vertex embedding to each level-h prototype.
#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    graph_id: u32,
    h: usize,
    dim: u32,
    prototype_count: usize,
    /// Row-major `vertex_count x prototype_count`; excluded rows hold NaN.
    values: Vec<f64>,
    excluded: Vec<bool>,
}

impl AffinityMatrix {
    pub fn graph_id(&self) -> u32 {
        self.graph_id
    }

    pub fn level(&self) -> (usize, u32) {
        (self.h, self.dim)
    }

    pub fn vertex_count(&self) -> usize {
        self.excluded.len()
    }

    pub fn prototype_count(&self) -> usize {
        self.prototype_count
    }

    pub fn is_excluded(&self, vertex: usize) -> bool {
        self.excluded[vertex]
    }

    /// Distance from vertex `i` to prototype `n`; `None` when the vertex
    /// has no valid embedding at this depth.
    pub fn value(&self, i: usize, n: usize) -> Option<f64> {
        if self.excluded[i] {
            return None;
        }
        let v = self.values[i * self.prototype_count + n];
        debug_assert!(!v.is_nan());
        Some(v)
    }
}

fn check_level(db: &DbTable, hierarchy: &PrototypeHierarchy, h: usize) -> Result<()> {
    let k = hierarchy.dim() as u32;
    if k == 0 || k > db.k_max() {
        return Err(Error::InvalidArgument(format!(
            "hierarchy dimension {k} exceeds table depth {}",
            db.k_max()
        )));
    }
    if h < 1 || h > hierarchy.level_count() {
        return Err(Error::InvalidArgument(format!(
            "level {h} outside 1..={}",
            hierarchy.level_count()
        )));
    }
    Ok(())
}

/// Distances from every vertex of `db`'s graph to the level-`h` prototypes.
pub fn affinity(db: &DbTable, hierarchy: &PrototypeHierarchy, h: usize) -> Result<AffinityMatrix> {
    check_level(db, hierarchy, h)?;
    let k = hierarchy.dim() as u32;
    let prototypes = hierarchy.level(h);
    let n = db.vertex_count();
    let mut values = vec![f64::NAN; n * prototypes.len()];
    let mut excluded = vec![true; n];
    for i in 0..n {
        if let Some(embedding) = db.prefix(i, k) {
            excluded[i] = false;
            let row = &mut values[i * prototypes.len()..(i + 1) * prototypes.len()];
            for (slot, c) in row.iter_mut().zip(prototypes.iter()) {
                *slot = squared_distance(embedding, c).sqrt();
            }
        }
    }
    Ok(AffinityMatrix {
        graph_id: db.graph_id(),
        h,
        dim: k,
        prototype_count: prototypes.len(),
        values,
        excluded,
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Per-vertex nearest prototype at one (h, k) level; excluded vertices
/// have no assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentVector {
    graph_id: u32,
    h: usize,
    dim: u32,
    assigned: Vec<Option<u32>>,
    prototype_count: usize,
}

impl AssignmentVector {
    pub fn graph_id(&self) -> u32 {
        self.graph_id
    }

    pub fn level(&self) -> (usize, u32) {
        (self.h, self.dim)
    }

    pub fn len(&self) -> usize {
        self.assigned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty()
    }

    pub fn get(&self, vertex: usize) -> Option<u32> {
        self.assigned[vertex]
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<u32>> + '_ {
        self.assigned.iter().copied()
    }

    pub fn prototype_count(&self) -> usize {
        self.prototype_count
    }
}

/// Argmin over each affinity row, lowest prototype index on ties.
pub fn assign(aff: &AffinityMatrix) -> AssignmentVector {
    let assigned = (0..aff.vertex_count())
        .map(|i| {
            if aff.is_excluded(i) {
                return None;
            }
            let mut best = (0u32, f64::INFINITY);
            for n in 0..aff.prototype_count() {
                let d = aff.value(i, n).expect("row is not excluded");
                if d < best.1 {
                    best = (n as u32, d);
                }
            }
            Some(best.0)
        })
        .collect();
    let (h, dim) = aff.level();
    AssignmentVector {
        graph_id: aff.graph_id(),
        h,
        dim,
        assigned,
        prototype_count: aff.prototype_count(),
    }
}

/// Fused nearest-prototype assignment. Compares squared distances, which
/// ranks identically to the Euclidean affinity path, ties included.
pub fn assign_nearest(
    db: &DbTable,
    hierarchy: &PrototypeHierarchy,
    h: usize,
) -> Result<AssignmentVector> {
    check_level(db, hierarchy, h)?;
    let k = hierarchy.dim() as u32;
    let prototypes = hierarchy.level(h);
    let assigned = (0..db.vertex_count())
        .map(|i| {
            db.prefix(i, k).map(|embedding| {
                let mut best = (0u32, f64::INFINITY);
                for n in 0..prototypes.len() {
                    let d2 = squared_distance(embedding, prototypes.point(n));
                    if d2 < best.1 {
                        best = (n as u32, d2);
                    }
                }
                best.0
            })
        })
        .collect();
    Ok(AssignmentVector {
        graph_id: db.graph_id(),
        h,
        dim: k,
        assigned,
        prototype_count: prototypes.len(),
    })
}

/// Pairwise vertex correspondence at one (h, k) level: entry (i, j) is set
/// exactly when both vertices are valid and share an assigned prototype.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl CorrespondenceMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }
}

/// Materialize the correspondence matrix between two graphs' assignments
/// at the same (h, k) level.
pub fn correspondence_matrix(
    a: &AssignmentVector,
    b: &AssignmentVector,
) -> Result<CorrespondenceMatrix> {
    if a.level() != b.level() {
        return Err(Error::InvalidArgument(format!(
            "level mismatch: {:?} vs {:?}",
            a.level(),
            b.level()
        )));
    }
    let mut bits = vec![false; a.len() * b.len()];
    for (i, ai) in a.iter().enumerate() {
        if let Some(pa) = ai {
            for (j, bj) in b.iter().enumerate() {
                if bj == Some(pa) {
                    bits[i * b.len() + j] = true;
                }
            }
        }
    }
    Ok(CorrespondenceMatrix {
        rows: a.len(),
        cols: b.len(),
        bits,
    })
}

/// Per-graph assignment histograms over every (h, k) level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureBank {
    graph_id: u32,
    levels: usize,
    k_max: u32,
    /// Index `(k - 1) * levels + (h - 1)`.
    counts: Vec<Vec<u32>>,
    fingerprint: u64,
}

impl FeatureBank {
    pub fn graph_id(&self) -> u32 {
        self.graph_id
    }

    pub fn level_count(&self) -> usize {
        self.levels
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// Identifies the hierarchy family this bank was built against.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Counts of vertices per prototype at level `(h, k)`, both 1-based.
    pub fn counts(&self, h: usize, k: u32) -> &[u32] {
        &self.counts[(k as usize - 1) * self.levels + (h - 1)]
    }

    /// Vertices with a valid embedding at depth `k` (level-independent).
    pub fn valid_vertices(&self, k: u32) -> u64 {
        self.counts(1, k).iter().map(|&c| c as u64).sum()
    }
}

/// Histogram one graph's assignments into a feature bank.
///
/// `assignments` must hold exactly one vector per (h, k) pair with
/// h in 1..=levels and k in 1..=k_max, in any order.
pub fn feature_bank(
    assignments: &[AssignmentVector],
    levels: usize,
    k_max: u32,
    fingerprint: u64,
) -> Result<FeatureBank> {
    if assignments.is_empty() {
        return Err(Error::InvalidArgument("no assignment vectors given".into()));
    }
    let graph_id = assignments[0].graph_id();
    let mut slots: Vec<Option<Vec<u32>>> = vec![None; levels * k_max as usize];
    for a in assignments {
        if a.graph_id() != graph_id {
            return Err(Error::InvalidArgument(
                "assignments span multiple graphs".into(),
            ));
        }
        let (h, k) = a.level();
        if h < 1 || h > levels || k < 1 || k > k_max {
            return Err(Error::InvalidArgument(format!(
                "assignment level ({h}, {k}) outside 1..={levels} x 1..={k_max}"
            )));
        }
        let slot = &mut slots[(k as usize - 1) * levels + (h - 1)];
        if slot.is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate assignment for level ({h}, {k})"
            )));
        }
        let mut histogram = vec![0u32; a.prototype_count()];
        for assigned in a.iter().flatten() {
            histogram[assigned as usize] += 1;
        }
        *slot = Some(histogram);
    }
    let counts = slots
        .into_iter()
        .enumerate()
        .map(|(idx, s)| {
            s.ok_or_else(|| {
                let (k, h) = (idx / levels + 1, idx % levels + 1);
                Error::InvalidArgument(format!("missing assignment for level ({h}, {k})"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureBank {
        graph_id,
        levels,
        k_max,
        counts,
        fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::db::db_table;
    use crate::graph::Graph;
    use crate::prototype::{build_hierarchy, hierarchy_from_levels, level0_points, PointSet};
    use approx::assert_abs_diff_eq;

    fn triangle() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    /// Single-level hierarchy with exactly these centroids, in this order.
    fn one_level(dim: usize, centroids: &[&[f64]]) -> PrototypeHierarchy {
        let mut set = PointSet::new(dim);
        for c in centroids {
            set.push(c);
        }
        hierarchy_from_levels(dim, vec![set])
    }

    #[test]
    fn affinity_scalar_distances() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let table = db_table(&g, 1).unwrap();
        // Both vertex embeddings are [ln 2] ~ 0.693.
        let hier = one_level(1, &[&[0.0], &[5.0]]);
        let aff = affinity(&table, &hier, 1).unwrap();
        let ln2 = 2.0f64.ln();
        assert_abs_diff_eq!(aff.value(0, 0).unwrap(), ln2, epsilon = 1e-12);
        assert_abs_diff_eq!(aff.value(0, 1).unwrap(), 5.0 - ln2, epsilon = 1e-12);
    }

    #[test]
    fn affinity_zero_on_matching_centroid() {
        let table = db_table(&triangle(), 1).unwrap();
        let hier = one_level(1, &[&[3.0f64.ln()]]);
        let aff = affinity(&table, &hier, 1).unwrap();
        for v in 0..3 {
            assert_abs_diff_eq!(aff.value(v, 0).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn affinity_triangle_single_mean_centroid() {
        // The 1-centroid fit over the triangle's level-0 points is their
        // mean; every valid row then holds the same |ln 3 - mean|.
        let table = db_table(&triangle(), 1).unwrap();
        let level0 = level0_points(std::slice::from_ref(&table), 1);
        let hier = build_hierarchy(&level0, 1, 0.2, 7).unwrap();
        assert_eq!(hier.level(1).len(), 1);
        let aff = affinity(&table, &hier, 1).unwrap();
        let expected = (3.0f64.ln() - hier.level(1).point(0)[0]).abs();
        for v in 0..3 {
            assert_abs_diff_eq!(aff.value(v, 0).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn affinity_dimension_and_level_errors() {
        let table = db_table(&triangle(), 1).unwrap();
        let hier = one_level(2, &[&[0.0, 0.0]]);
        assert!(affinity(&table, &hier, 1).is_err());
        let hier = one_level(1, &[&[0.0]]);
        assert!(affinity(&table, &hier, 2).is_err());
    }

    #[test]
    fn assign_takes_argmin_with_low_index_ties() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let table = db_table(&g, 1).unwrap();
        let ln2 = 2.0f64.ln();
        // Equidistant centroids: the tie resolves to index 0.
        let hier = one_level(1, &[&[ln2 - 1.0], &[ln2 + 1.0]]);
        let a = assign(&affinity(&table, &hier, 1).unwrap());
        assert_eq!(a.get(0), Some(0));
        assert_eq!(a.get(1), Some(0));
        // Clear winner.
        let hier = one_level(1, &[&[ln2 + 3.0], &[ln2]]);
        let a = assign(&affinity(&table, &hier, 1).unwrap());
        assert_eq!(a.get(0), Some(1));
    }

    #[test]
    fn invalid_vertices_stay_excluded() {
        // Vertex 2 is isolated: no valid embedding at any depth.
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let table = db_table(&g, 1).unwrap();
        let hier = one_level(1, &[&[0.0], &[1.0]]);
        let aff = affinity(&table, &hier, 1).unwrap();
        assert!(aff.is_excluded(2));
        assert_eq!(aff.value(2, 0), None);
        let a = assign(&aff);
        assert_eq!(a.get(2), None);
        let bank = feature_bank(&[a], 1, 1, 0).unwrap();
        assert_eq!(bank.counts(1, 1).iter().sum::<u32>(), 2);
        assert_eq!(bank.valid_vertices(1), 2);
    }

    #[test]
    fn fused_assignment_matches_affinity_path() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        let table = db_table(&g, 2).unwrap();
        let level0 = level0_points(std::slice::from_ref(&table), 2);
        let hier = build_hierarchy(&level0, 3, 0.5, 3).unwrap();
        for h in 1..=3 {
            let slow = assign(&affinity(&table, &hier, h).unwrap());
            let fast = assign_nearest(&table, &hier, h).unwrap();
            assert_eq!(slow, fast);
        }
    }

    #[test]
    fn correspondence_self_pair() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let table = db_table(&g, 1).unwrap();
        let hier = one_level(1, &[&[2.0f64.ln()], &[9.0]]);
        let a = assign_nearest(&table, &hier, 1).unwrap();
        // Same graph against itself: all valid pairs share the prototype.
        let m = correspondence_matrix(&a, &a).unwrap();
        assert_eq!(m.count_ones(), 4);
        for i in 0..2 {
            assert!(m.get(i, i));
        }
    }

    #[test]
    fn correspondence_single_vertex_pair() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let mut g2 = g.clone();
        g2.set_id(1);
        let ta = db_table(&g, 1).unwrap();
        let tb = db_table(&g2, 1).unwrap();
        let hier = one_level(1, &[&[2.0f64.ln()]]);
        let a = assign_nearest(&ta, &hier, 1).unwrap();
        let b = assign_nearest(&tb, &hier, 1).unwrap();
        let m = correspondence_matrix(&a, &b).unwrap();
        assert!(m.get(0, 0));
        assert_eq!(m.count_ones(), 4);
    }

    #[test]
    fn correspondence_disjoint_assignments() {
        let near = Graph::from_edges(2, &[(0, 1)]).unwrap(); // embeddings ln 2
        let far = triangle(); // embeddings ln 3
        let ta = db_table(&near, 1).unwrap();
        let tb = db_table(&far, 1).unwrap();
        let hier = one_level(1, &[&[2.0f64.ln()], &[3.0f64.ln()]]);
        let a = assign_nearest(&ta, &hier, 1).unwrap();
        let b = assign_nearest(&tb, &hier, 1).unwrap();
        let m = correspondence_matrix(&a, &b).unwrap();
        assert_eq!(m.count_ones(), 0);
    }

    #[test]
    fn correspondence_level_mismatch() {
        let table = db_table(&triangle(), 1).unwrap();
        let hier = one_level(1, &[&[0.0], &[1.0]]);
        let hier2 = hierarchy_from_levels(1, {
            let mut l1 = PointSet::new(1);
            l1.push(&[0.0]);
            l1.push(&[1.0]);
            let mut l2 = PointSet::new(1);
            l2.push(&[0.5]);
            vec![l1, l2]
        });
        let a = assign_nearest(&table, &hier, 1).unwrap();
        let b = assign_nearest(&table, &hier2, 2).unwrap();
        assert!(correspondence_matrix(&a, &b).is_err());
    }

    #[test]
    fn correspondence_sum_equals_count_inner_product() {
        let mut g0 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let mut g1 = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)]).unwrap();
        g0.set_id(0);
        g1.set_id(1);
        let tables = vec![db_table(&g0, 2).unwrap(), db_table(&g1, 2).unwrap()];
        for k in 1..=2u32 {
            let level0 = level0_points(&tables, k);
            let hier = build_hierarchy(&level0, 2, 0.4, 5).unwrap();
            for h in 1..=2 {
                let a = assign_nearest(&tables[0], &hier, h).unwrap();
                let b = assign_nearest(&tables[1], &hier, h).unwrap();
                let m = correspondence_matrix(&a, &b).unwrap();
                let size = hier.level(h).len();
                let mut ha = vec![0u64; size];
                let mut hb = vec![0u64; size];
                for v in a.iter().flatten() {
                    ha[v as usize] += 1;
                }
                for v in b.iter().flatten() {
                    hb[v as usize] += 1;
                }
                let dot: u64 = ha.iter().zip(&hb).map(|(x, y)| x * y).sum();
                assert_eq!(m.count_ones(), dot);
            }
        }
    }

    #[test]
    fn feature_bank_validates_coverage() {
        let table = db_table(&triangle(), 1).unwrap();
        let hier = one_level(1, &[&[0.0], &[2.0]]);
        let a = assign_nearest(&table, &hier, 1).unwrap();
        assert!(feature_bank(&[a.clone()], 2, 1, 0).is_err()); // missing (2, 1)
        assert!(feature_bank(&[a.clone(), a.clone()], 1, 1, 0).is_err()); // duplicate
        let bank = feature_bank(&[a], 1, 1, 9).unwrap();
        assert_eq!(bank.fingerprint(), 9);
        assert_eq!(bank.counts(1, 1), &[3, 0]);
    }

    #[test]
    fn all_vertices_on_one_prototype() {
        let table = db_table(&triangle(), 1).unwrap();
        // Prototype 2 of 4 sits on the embedding value.
        let hier = one_level(1, &[&[-9.0], &[9.0], &[3.0f64.ln()], &[99.0]]);
        let a = assign_nearest(&table, &hier, 1).unwrap();
        let bank = feature_bank(&[a], 1, 1, 0).unwrap();
        assert_eq!(bank.counts(1, 1), &[0, 0, 3, 0]);
    }

    #[test]
    fn zero_valid_vertices_give_zero_bank() {
        let g = Graph::empty(4);
        let table = db_table(&g, 1).unwrap();
        let hier = one_level(1, &[&[0.0], &[1.0]]);
        let a = assign_nearest(&table, &hier, 1).unwrap();
        let bank = feature_bank(&[a], 1, 1, 0).unwrap();
        assert_eq!(bank.counts(1, 1), &[0, 0]);
    }

    #[test]
    fn identical_tables_give_identical_banks() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let t1 = db_table(&g, 2).unwrap();
        let t2 = db_table(&g, 2).unwrap();
        let hiers: Vec<_> = (1..=2u32)
            .map(|k| {
                let level0 = level0_points(std::slice::from_ref(&t1), k);
                build_hierarchy(&level0, 2, 0.5, 1).unwrap()
            })
            .collect();
        let make = |t: &DbTable| {
            let assignments: Vec<_> = hiers
                .iter()
                .flat_map(|hr| (1..=2).map(move |h| assign_nearest(t, hr, h).unwrap()))
                .collect();
            feature_bank(&assignments, 2, 2, 0).unwrap()
        };
        assert_eq!(make(&t1), make(&t2));
    }

    #[test]
    fn bank_invariant_under_vertex_relabeling() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        // Same path under the relabeling v -> 4 - v.
        let p = Graph::from_edges(5, &[(4, 3), (3, 2), (2, 1), (1, 0)]).unwrap();
        let tg = db_table(&g, 2).unwrap();
        let tp = db_table(&p, 2).unwrap();
        let level0 = level0_points(std::slice::from_ref(&tg), 2);
        let hier = build_hierarchy(&level0, 2, 0.5, 8).unwrap();
        for h in 1..=2 {
            let size = hier.level(h).len();
            let mut hist_g = vec![0u32; size];
            let mut hist_p = vec![0u32; size];
            for v in assign_nearest(&tg, &hier, h).unwrap().iter().flatten() {
                hist_g[v as usize] += 1;
            }
            for v in assign_nearest(&tp, &hier, h).unwrap().iter().flatten() {
                hist_p[v as usize] += 1;
            }
            assert_eq!(hist_g, hist_p);
        }
    }

    #[test]
    fn transitivity_of_correspondence() {
        // Three graphs, one shared hierarchy: aligned(u, v) and
        // aligned(v, w) must force aligned(u, w).
        let specs: [(usize, &[(u32, u32)]); 3] = [
            (4, &[(0, 1), (1, 2), (2, 3)]),
            (4, &[(0, 1), (1, 2), (2, 3), (3, 0)]),
            (5, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)]),
        ];
        let mut tables = Vec::new();
        for (i, (n, edges)) in specs.iter().enumerate() {
            let mut g = Graph::from_edges(*n, edges).unwrap();
            g.set_id(i as u32);
            tables.push(db_table(&g, 2).unwrap());
        }
        let level0 = level0_points(&tables, 2);
        let hier = build_hierarchy(&level0, 3, 0.4, 99).unwrap();
        for h in 1..=3 {
            let assigns: Vec<_> = tables
                .iter()
                .map(|t| assign_nearest(t, &hier, h).unwrap())
                .collect();
            let m01 = correspondence_matrix(&assigns[0], &assigns[1]).unwrap();
            let m12 = correspondence_matrix(&assigns[1], &assigns[2]).unwrap();
            let m02 = correspondence_matrix(&assigns[0], &assigns[2]).unwrap();
            for u in 0..m01.rows() {
                for v in 0..m01.cols() {
                    if !m01.get(u, v) {
                        continue;
                    }
                    for w in 0..m12.cols() {
                        if m12.get(v, w) {
                            assert!(m02.get(u, w), "transitivity violated at h={h}");
                        }
                    }
                }
            }
        }
    }
}
