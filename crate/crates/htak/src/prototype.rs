//! Hierarchical prototype representations via repeated k-means.
//!
//! Level 0 is the set of vertex embeddings over all graphs; level h is the
//! set of k-means centroids fitted to level h-1, with the level sizes
//! following `N_h = max(1, round(ratio * N_{h-1}))`. Everything is seeded
//! explicitly and computed in a fixed order so that identical inputs give
//! bit-identical hierarchies regardless of thread count.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::db::DbTable;
use crate::error::{Error, Result};

/// Lloyd iteration budget used throughout the pipeline.
pub const DEFAULT_MAX_ITER: u32 = 100;

/// Relative objective decrease below which Lloyd iteration stops.
const REL_TOL: f64 = 1e-9;

/// Where a level-0 point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointOrigin {
    pub graph_id: u32,
    pub vertex: u32,
}

/// A flat set of fixed-dimension points, optionally with per-point
/// provenance (present only for level-0 sets).
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
    origins: Option<Vec<PointOrigin>>,
}

impl PointSet {
    pub fn new(dim: usize) -> PointSet {
        PointSet {
            dim,
            data: Vec::new(),
            origins: None,
        }
    }

    pub fn with_origins(dim: usize) -> PointSet {
        PointSet {
            dim,
            data: Vec::new(),
            origins: Some(Vec::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn origin(&self, i: usize) -> Option<PointOrigin> {
        self.origins.as_ref().map(|o| o[i])
    }

    pub fn push(&mut self, point: &[f64]) {
        assert_eq!(point.len(), self.dim, "point dimension mismatch");
        assert!(self.origins.is_none(), "origin-tracking set needs push_with_origin");
        self.data.extend_from_slice(point);
    }

    pub fn push_with_origin(&mut self, point: &[f64], origin: PointOrigin) {
        assert_eq!(point.len(), self.dim, "point dimension mismatch");
        self.data.extend_from_slice(point);
        self.origins
            .as_mut()
            .expect("point set was not created with origins")
            .push(origin);
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Sort points lexicographically by coordinates (origins follow).
    ///
    /// This makes every downstream computation a function of the point
    /// multiset alone: relabeling vertices inside any input graph can only
    /// permute equal points, which no summation order can distinguish.
    pub fn sort_canonical(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (self.point(a), self.point(b));
            pa.iter()
                .zip(pb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut data = Vec::with_capacity(self.data.len());
        for &i in &order {
            data.extend_from_slice(self.point(i));
        }
        let origins = self
            .origins
            .as_ref()
            .map(|o| order.iter().map(|&i| o[i]).collect());
        self.data = data;
        self.origins = origins;
    }
}

/// Gather the level-0 point set at depth `k`: the valid k-prefixes of every
/// table row, canonically ordered.
pub fn level0_points(tables: &[DbTable], k: u32) -> PointSet {
    let mut points = PointSet::with_origins(k as usize);
    for table in tables {
        for v in 0..table.vertex_count() {
            if let Some(prefix) = table.prefix(v, k) {
                points.push_with_origin(
                    prefix,
                    PointOrigin {
                        graph_id: table.graph_id(),
                        vertex: v as u32,
                    },
                );
            }
        }
    }
    points.sort_canonical();
    points
}

/// Outcome of one k-means run.
#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub centroids: PointSet,
    /// Cluster index per input point.
    pub assignment: Vec<u32>,
    /// Within-cluster sum of squared distances, exactly as assigned.
    pub objective: f64,
    pub iterations: u32,
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

/// Nearest centroid of `p`; ties go to the lowest centroid index.
fn nearest(p: &[f64], centroids: &PointSet) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for j in 0..centroids.len() {
        let d2 = squared_distance(p, centroids.point(j));
        if d2 < best.1 {
            best = (j as u32, d2);
        }
    }
    best
}

fn assign_all(points: &PointSet, centroids: &PointSet) -> Vec<(u32, f64)> {
    (0..points.len())
        .into_par_iter()
        .map(|i| nearest(points.point(i), centroids))
        .collect()
}

fn init_plus_plus(points: &PointSet, kappa: usize, rng: &mut ChaCha8Rng) -> PointSet {
    let n = points.len();
    let mut centroids = PointSet::new(points.dim());
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.push(points.point(first));

    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| squared_distance(points.point(i), points.point(first)))
        .collect();
    while centroids.len() < kappa {
        // Sample the next seed proportionally to squared distance; when all
        // remaining mass is zero (duplicate points) take the lowest free index.
        let next = match WeightedIndex::new(d2.iter().copied()) {
            Ok(weights) => weights.sample(rng),
            Err(_) => chosen
                .iter()
                .position(|&c| !c)
                .expect("kappa <= point count leaves a free point"),
        };
        chosen[next] = true;
        centroids.push(points.point(next));
        let new_centroid = centroids.point(centroids.len() - 1).to_vec();
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            let cand = squared_distance(points.point(i), &new_centroid);
            if cand < *d {
                *d = cand;
            }
        });
    }
    centroids
}

/// Lloyd k-means with seeded k-means++ initialization.
///
/// Stops after `max_iter` assignment passes or when the relative objective
/// decrease falls below 1e-9. Empty clusters are re-seeded at the point
/// currently farthest from its assigned centroid, which keeps kappa
/// constant and cannot increase the objective.
pub fn kmeans(points: &PointSet, kappa: usize, seed: u64, max_iter: u32) -> Result<KmeansResult> {
    let n = points.len();
    if kappa == 0 {
        return Err(Error::InvalidArgument("kappa must be >= 1".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("k-means needs at least one point".into()));
    }
    if kappa > n {
        return Err(Error::InvalidArgument(format!(
            "kappa {kappa} exceeds point count {n}"
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }

    let dim = points.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(points, kappa, &mut rng);

    let mut prev_objective = f64::INFINITY;
    let mut iterations = 0u32;
    loop {
        let mut assigned = assign_all(points, &centroids);
        let objective: f64 = assigned.iter().map(|&(_, d)| d).sum();
        iterations += 1;
        debug_assert!(
            !prev_objective.is_finite() || objective <= prev_objective * (1.0 + 1e-12),
            "k-means objective increased: {prev_objective} -> {objective}"
        );
        let converged =
            prev_objective.is_finite() && prev_objective - objective <= REL_TOL * prev_objective;
        if converged || iterations >= max_iter {
            return Ok(KmeansResult {
                centroids,
                assignment: assigned.iter().map(|&(c, _)| c).collect(),
                objective,
                iterations,
            });
        }
        prev_objective = objective;

        // Means in fixed point order, so results are thread-count invariant.
        let mut sums = vec![0.0f64; kappa * dim];
        let mut counts = vec![0u64; kappa];
        for (i, &(c, _)) in assigned.iter().enumerate() {
            counts[c as usize] += 1;
            let sum = &mut sums[c as usize * dim..(c as usize + 1) * dim];
            for (s, x) in sum.iter_mut().zip(points.point(i)) {
                *s += x;
            }
        }
        let mut next = PointSet::new(dim);
        for c in 0..kappa {
            if counts[c] > 0 {
                let mean: Vec<f64> = sums[c * dim..(c + 1) * dim]
                    .iter()
                    .map(|s| s / counts[c] as f64)
                    .collect();
                next.push(&mean);
            } else {
                next.push(centroids.point(c)); // re-seeded below
            }
        }
        for c in 0..kappa {
            if counts[c] > 0 {
                continue;
            }
            // Farthest point from its current centroid, lowest index on ties.
            let (mut far, mut far_d2) = (usize::MAX, -1.0);
            for (i, &(owner, d2)) in assigned.iter().enumerate() {
                if counts[owner as usize] > 1 && d2 > far_d2 {
                    far = i;
                    far_d2 = d2;
                }
            }
            if far == usize::MAX {
                continue; // every non-empty cluster is a singleton
            }
            counts[assigned[far].0 as usize] -= 1;
            counts[c] += 1;
            assigned[far] = (c as u32, 0.0);
            let point = points.point(far).to_vec();
            let slot = &mut next.data[c * dim..(c + 1) * dim];
            slot.copy_from_slice(&point);
        }
        centroids = next;
    }
}

/// The family of prototype sets for one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeHierarchy {
    dim: usize,
    levels: Vec<PointSet>,
    seed: u64,
    ratio: f64,
}

impl PrototypeHierarchy {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of levels H.
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Centroids of level `h`, 1-based.
    pub fn level(&self, h: usize) -> &PointSet {
        &self.levels[h - 1]
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(PointSet::len).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }
}

/// Test-only constructor with exact centroid placement.
#[cfg(test)]
pub(crate) fn hierarchy_from_levels(dim: usize, levels: Vec<PointSet>) -> PrototypeHierarchy {
    PrototypeHierarchy {
        dim,
        levels,
        seed: 0,
        ratio: 0.5,
    }
}

/// Deterministically mix a tag into a base seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Build `levels` prototype sets over `level0`, each fitted to the one
/// below with `N_h = max(1, round(ratio * N_{h-1}))` centroids. The
/// per-level seed is derived from `(seed, h)`, so prefixes of a deeper
/// hierarchy coincide with shallower ones built from the same inputs.
pub fn build_hierarchy(
    level0: &PointSet,
    levels: usize,
    ratio: f64,
    seed: u64,
) -> Result<PrototypeHierarchy> {
    if level0.is_empty() {
        return Err(Error::InvalidArgument("level-0 point set is empty".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ratio must lie in (0, 1), got {ratio}"
        )));
    }
    if levels < 1 {
        return Err(Error::InvalidArgument("hierarchy needs at least one level".into()));
    }

    let mut built: Vec<PointSet> = Vec::with_capacity(levels);
    for h in 1..=levels {
        let source = built.last().unwrap_or(level0);
        let size = ((ratio * source.len() as f64).round() as usize).max(1);
        let result = kmeans(source, size, derive_seed(seed, h as u64), DEFAULT_MAX_ITER)?;
        built.push(result.centroids);
    }
    Ok(PrototypeHierarchy {
        dim: level0.dim(),
        levels: built,
        seed,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn set_from(dim: usize, points: &[&[f64]]) -> PointSet {
        let mut s = PointSet::new(dim);
        for p in points {
            s.push(p);
        }
        s
    }

    /// Exhaustive best two-cluster objective over all bipartitions.
    fn brute_force_two_means(points: &PointSet) -> f64 {
        let n = points.len();
        assert!(n <= 20, "oracle is exponential");
        let dim = points.dim();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) - 1 {
            let mut sums = [vec![0.0; dim], vec![0.0; dim]];
            let mut counts = [0usize; 2];
            for i in 0..n {
                let side = ((mask >> i) & 1) as usize;
                counts[side] += 1;
                for (s, x) in sums[side].iter_mut().zip(points.point(i)) {
                    *s += x;
                }
            }
            let mut objective = 0.0;
            for i in 0..n {
                let side = ((mask >> i) & 1) as usize;
                objective += points
                    .point(i)
                    .iter()
                    .zip(&sums[side])
                    .map(|(x, s)| {
                        let d = x - s / counts[side] as f64;
                        d * d
                    })
                    .sum::<f64>();
            }
            best = best.min(objective);
        }
        best
    }

    #[test]
    fn identical_points_single_cluster() {
        let p = set_from(2, &[&[3.0, 4.0]; 4]);
        let r = kmeans(&p, 1, 7, 100).unwrap();
        assert_eq!(r.centroids.point(0), &[3.0, 4.0]);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn two_clear_clusters() {
        let p = set_from(
            2,
            &[&[0.0, 0.0], &[0.0, 1.0], &[10.0, 0.0], &[10.0, 1.0]],
        );
        let r = kmeans(&p, 2, 42, 100).unwrap();
        assert_abs_diff_eq!(r.objective, 1.0, epsilon = 1e-12);
        let mut centroids: Vec<Vec<f64>> =
            (0..2).map(|j| r.centroids.point(j).to_vec()).collect();
        centroids.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_abs_diff_eq!(centroids[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(centroids[0][1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(centroids[1][0], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(centroids[1][1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.objective, brute_force_two_means(&p), epsilon = 1e-12);
    }

    #[test]
    fn kappa_equals_point_count() {
        let p = set_from(1, &[&[1.0], &[2.0], &[5.0]]);
        let r = kmeans(&p, 3, 3, 100).unwrap();
        assert_eq!(r.objective, 0.0);
        let mut seen: Vec<f64> = (0..3).map(|j| r.centroids.point(j)[0]).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![1.0, 2.0, 5.0]);
    }

    #[test]
    fn kmeans_argument_errors() {
        let p = set_from(1, &[&[0.0]]);
        assert!(kmeans(&p, 0, 0, 100).is_err());
        assert!(kmeans(&p, 2, 0, 100).is_err());
        assert!(kmeans(&p, 1, 0, 0).is_err());
        assert!(kmeans(&PointSet::new(1), 1, 0, 100).is_err());
    }

    #[test]
    fn kmeans_is_deterministic() {
        let mut p = PointSet::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..40 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            p.push(&v);
        }
        let a = kmeans(&p, 5, 1234, 100).unwrap();
        let b = kmeans(&p, 5, 1234, 100).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn hierarchy_size_law() {
        let mut p = PointSet::new(2);
        for i in 0..100 {
            p.push(&[i as f64, (i * i % 17) as f64]);
        }
        let h = build_hierarchy(&p, 5, 0.2, 42).unwrap();
        assert_eq!(h.level_sizes(), vec![20, 4, 1, 1, 1]);
    }

    #[test]
    fn hierarchy_single_point() {
        let p = set_from(2, &[&[1.0, 2.0]]);
        let h = build_hierarchy(&p, 3, 0.2, 0).unwrap();
        for level in 1..=3 {
            assert_eq!(h.level(level).len(), 1);
            assert_eq!(h.level(level).point(0), &[1.0, 2.0]);
        }
    }

    #[test]
    fn hierarchy_collinear_matches_bipartition_oracle() {
        let mut p = PointSet::new(1);
        for i in 0..10 {
            p.push(&[i as f64]);
        }
        let h = build_hierarchy(&p, 1, 0.2, 11).unwrap();
        assert_eq!(h.level(1).len(), 2);
        let r = kmeans(&p, 2, derive_seed(11, 1), DEFAULT_MAX_ITER).unwrap();
        let best = brute_force_two_means(&p);
        // A local optimum can only be at or above the global optimum.
        assert!(r.objective >= best - 1e-9);
        assert_abs_diff_eq!(r.objective, best, epsilon = 1e-9);
    }

    #[test]
    fn hierarchy_argument_errors() {
        let p = set_from(1, &[&[0.0]]);
        assert!(build_hierarchy(&PointSet::new(1), 2, 0.2, 0).is_err());
        assert!(build_hierarchy(&p, 0, 0.2, 0).is_err());
        assert!(build_hierarchy(&p, 2, 0.0, 0).is_err());
        assert!(build_hierarchy(&p, 2, 1.0, 0).is_err());
    }

    #[test]
    fn centroids_stay_in_bounding_box() {
        let mut p = PointSet::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..60 {
            p.push(&[rng.random_range(-3.0..7.0), rng.random_range(0.0..2.0)]);
        }
        let h = build_hierarchy(&p, 4, 0.3, 21).unwrap();
        let mut source = &p;
        for level in 1..=4 {
            let mut lo = vec![f64::INFINITY; 2];
            let mut hi = vec![f64::NEG_INFINITY; 2];
            for pt in source.iter() {
                for d in 0..2 {
                    lo[d] = lo[d].min(pt[d]);
                    hi[d] = hi[d].max(pt[d]);
                }
            }
            for c in h.level(level).iter() {
                for d in 0..2 {
                    assert!(c[d] >= lo[d] - 1e-12 && c[d] <= hi[d] + 1e-12);
                }
            }
            source = h.level(level);
        }
    }

    #[test]
    fn canonical_sort_ignores_input_order() {
        let mut a = set_from(2, &[&[1.0, 2.0], &[0.0, 5.0], &[1.0, 0.0]]);
        let mut b = set_from(2, &[&[1.0, 0.0], &[1.0, 2.0], &[0.0, 5.0]]);
        a.sort_canonical();
        b.sort_canonical();
        assert_eq!(a, b);
        assert_eq!(a.point(0), &[0.0, 5.0]);
    }

    #[test]
    fn hierarchy_is_invariant_to_point_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let points: Vec<[f64; 2]> = (0..50)
            .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let mut fwd = PointSet::new(2);
        let mut rev = PointSet::new(2);
        for p in &points {
            fwd.push(p);
        }
        for p in points.iter().rev() {
            rev.push(p);
        }
        fwd.sort_canonical();
        rev.sort_canonical();
        let ha = build_hierarchy(&fwd, 3, 0.2, 9).unwrap();
        let hb = build_hierarchy(&rev, 3, 0.2, 9).unwrap();
        assert_eq!(ha, hb);
    }
}
