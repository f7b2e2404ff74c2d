//! End-to-end kernel construction: embeddings, hierarchies, feature banks.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use rayon::prelude::*;

use crate::align::{assign_nearest, feature_bank, AssignmentVector, FeatureBank};
use crate::db::{db_table, DbTable};
use crate::error::{Error, Result};
use crate::graph::GraphCollection;
use crate::kernel::{gram_from_banks, GramMatrix, GramMode, RunMeta};
use crate::prototype::{build_hierarchy, derive_seed, level0_points, PrototypeHierarchy};

/// Parameters for one kernel run.
#[derive(Debug, Clone, Copy)]
pub struct PipelineParams {
    /// Hierarchy depth H.
    pub h_levels: u32,
    /// Level-size ratio: `N_h = max(1, round(ratio * N_{h-1}))`.
    pub ratio: f64,
    pub seed: u64,
    /// Optional downward cap on the embedding depth K.
    pub max_k: Option<u32>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            h_levels: 5,
            ratio: 0.2,
            seed: 42,
            max_k: None,
        }
    }
}

/// Everything derived from a collection for one parameter set. Gram
/// matrices for any `h <= h_levels` are assembled from the shared banks,
/// so a sweep over H costs one construction.
#[derive(Debug)]
pub struct Pipeline {
    dataset: String,
    graph_count: usize,
    params: PipelineParams,
    global_k: u32,
    k_max: u32,
    tables: Vec<DbTable>,
    hierarchies: Vec<PrototypeHierarchy>,
    banks: Vec<FeatureBank>,
    fingerprint: u64,
    timings: Vec<(String, f64)>,
}

impl Pipeline {
    pub fn build(collection: &GraphCollection, params: PipelineParams) -> Result<Pipeline> {
        if params.h_levels < 1 || params.h_levels > 16 {
            return Err(Error::InvalidArgument(format!(
                "h_levels {} outside 1..=16",
                params.h_levels
            )));
        }
        if !(params.ratio > 0.0 && params.ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ratio must lie in (0, 1), got {}",
                params.ratio
            )));
        }
        if let Some(cap) = params.max_k {
            if cap < 1 {
                return Err(Error::InvalidArgument("max_k must be >= 1".into()));
            }
        }

        let global_k = collection.global_k();
        let k_max = params.max_k.map_or(global_k, |cap| cap.min(global_k));
        let mut timings = Vec::new();

        let start = Instant::now();
        let tables: Vec<DbTable> = collection
            .graphs()
            .par_iter()
            .map(|g| db_table(g, k_max))
            .collect::<Result<_>>()?;
        timings.push(("db-tables".to_string(), ms_since(start)));

        let start = Instant::now();
        let hierarchies: Vec<PrototypeHierarchy> = (1..=k_max)
            .into_par_iter()
            .map(|k| {
                let level0 = level0_points(&tables, k);
                build_hierarchy(
                    &level0,
                    params.h_levels as usize,
                    params.ratio,
                    derive_seed(params.seed, k as u64),
                )
            })
            .collect::<Result<_>>()?;
        timings.push(("hierarchies".to_string(), ms_since(start)));

        let fingerprint = fingerprint_hierarchies(&params, k_max, &hierarchies);

        let start = Instant::now();
        let banks: Vec<FeatureBank> = tables
            .par_iter()
            .map(|table| {
                let assignments = table_assignments(table, &hierarchies, params.h_levels)?;
                feature_bank(
                    &assignments,
                    params.h_levels as usize,
                    k_max,
                    fingerprint,
                )
            })
            .collect::<Result<_>>()?;
        timings.push(("feature-banks".to_string(), ms_since(start)));

        Ok(Pipeline {
            dataset: collection.name().to_string(),
            graph_count: collection.len(),
            params,
            global_k,
            k_max,
            tables,
            hierarchies,
            banks,
            fingerprint,
            timings,
        })
    }

    pub fn dataset(&self) -> &str {
        &self.dataset
    }

    pub fn graph_count(&self) -> usize {
        self.graph_count
    }

    pub fn params(&self) -> &PipelineParams {
        &self.params
    }

    pub fn global_k(&self) -> u32 {
        self.global_k
    }

    /// Embedding depth after any cap.
    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    pub fn tables(&self) -> &[DbTable] {
        &self.tables
    }

    /// Hierarchy for depth `k`, 1-based.
    pub fn hierarchy(&self, k: u32) -> &PrototypeHierarchy {
        &self.hierarchies[k as usize - 1]
    }

    pub fn hierarchies(&self) -> &[PrototypeHierarchy] {
        &self.hierarchies
    }

    pub fn banks(&self) -> &[FeatureBank] {
        &self.banks
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Stage wall times in milliseconds, in execution order.
    pub fn timings(&self) -> &[(String, f64)] {
        &self.timings
    }

    /// Recompute the per-level assignments of one graph (oracle and dumps;
    /// the production path keeps only the histograms).
    pub fn assignments_for(&self, graph: usize) -> Result<Vec<AssignmentVector>> {
        if graph >= self.tables.len() {
            return Err(Error::InvalidArgument(format!(
                "graph index {graph} outside 0..{}",
                self.tables.len()
            )));
        }
        table_assignments(&self.tables[graph], &self.hierarchies, self.params.h_levels)
    }

    fn meta(&self, h_levels: u32, mode: GramMode) -> RunMeta {
        RunMeta {
            dataset: self.dataset.clone(),
            h_levels,
            k_max: self.k_max,
            global_k: self.global_k,
            ratio: self.params.ratio,
            seed: self.params.seed,
            mode,
        }
    }

    /// Gram matrix summing hierarchy levels `1..=h`.
    pub fn gram(&self, h: u32) -> Result<GramMatrix> {
        if h < 1 || h > self.params.h_levels {
            return Err(Error::InvalidArgument(format!(
                "H {h} outside 1..={}",
                self.params.h_levels
            )));
        }
        gram_from_banks(&self.banks, h, self.meta(h, GramMode::SingleH))
    }

    /// One Gram matrix per `H` in `1..=h_levels`, sharing all tables,
    /// hierarchies and banks.
    pub fn gram_sweep(&self) -> Result<Vec<GramMatrix>> {
        (1..=self.params.h_levels)
            .map(|h| gram_from_banks(&self.banks, h, self.meta(h, GramMode::Sweep)))
            .collect()
    }
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn table_assignments(
    table: &DbTable,
    hierarchies: &[PrototypeHierarchy],
    h_levels: u32,
) -> Result<Vec<AssignmentVector>> {
    let mut assignments = Vec::with_capacity(hierarchies.len() * h_levels as usize);
    for hierarchy in hierarchies {
        for h in 1..=h_levels as usize {
            assignments.push(assign_nearest(table, hierarchy, h)?);
        }
    }
    Ok(assignments)
}

/// Hash the run parameters and every centroid so banks from different runs
/// cannot be combined silently.
fn fingerprint_hierarchies(
    params: &PipelineParams,
    k_max: u32,
    hierarchies: &[PrototypeHierarchy],
) -> u64 {
    let mut hasher = DefaultHasher::new();
    params.h_levels.hash(&mut hasher);
    params.ratio.to_bits().hash(&mut hasher);
    params.seed.hash(&mut hasher);
    k_max.hash(&mut hasher);
    for hierarchy in hierarchies {
        hierarchy.dim().hash(&mut hasher);
        for h in 1..=hierarchy.level_count() {
            let level = hierarchy.level(h);
            level.len().hash(&mut hasher);
            for point in level.iter() {
                for value in point {
                    value.to_bits().hash(&mut hasher);
                }
            }
        }
    }
    hasher.finish()
}
