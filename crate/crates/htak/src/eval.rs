//! Gram matrix verification and kernel-space cross-validation.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative tolerance for the minimum-eigenvalue check:
/// a matrix passes when `min_eig >= -PSD_TOL * max_diagonal`.
pub const PSD_TOL: f64 = 1e-8;

/// Outcome of checking a Gram matrix for kernel validity.
#[derive(Debug, Clone)]
pub struct GramCheck {
    pub size: usize,
    pub symmetric: bool,
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    pub max_diagonal: f64,
    pub cauchy_schwarz_violations: usize,
    pub psd_tolerance: f64,
}

impl GramCheck {
    /// Symmetric and PSD within tolerance.
    pub fn passes(&self) -> bool {
        self.symmetric && self.min_eigenvalue >= -self.psd_tolerance * self.max_diagonal.max(1.0)
    }
}

/// Check symmetry, the Cauchy-Schwarz bound, and the minimum eigenvalue of
/// a row-major `size x size` matrix. Eigenvalues are computed on the
/// symmetrized matrix so the report stays meaningful for near-symmetric
/// input; `max_asymmetry` records how far that symmetrization reached.
pub fn check_gram(values: &[f64], size: usize, psd_tolerance: f64) -> Result<GramCheck> {
    if values.len() != size * size {
        return Err(Error::InvalidArgument(format!(
            "matrix data has {} entries, expected {}",
            values.len(),
            size * size
        )));
    }
    if size == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let mut max_asymmetry = 0.0f64;
    for p in 0..size {
        for q in (p + 1)..size {
            max_asymmetry = max_asymmetry.max((values[p * size + q] - values[q * size + p]).abs());
        }
    }
    let symmetric = max_asymmetry == 0.0;

    let max_diagonal = (0..size)
        .map(|i| values[i * size + i])
        .fold(f64::NEG_INFINITY, f64::max);

    let mut cauchy_schwarz_violations = 0usize;
    for p in 0..size {
        for q in 0..size {
            let lhs = values[p * size + q] * values[p * size + q];
            let rhs = values[p * size + p] * values[q * size + q];
            if lhs > rhs * (1.0 + 1e-12) + 1e-12 {
                cauchy_schwarz_violations += 1;
            }
        }
    }

    let mut m = DMatrix::from_row_slice(size, size, values);
    if !symmetric {
        let t = m.transpose();
        m = (&m + t) * 0.5;
    }
    let eigen = m.symmetric_eigen();
    let min_eigenvalue = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);

    Ok(GramCheck {
        size,
        symmetric,
        max_asymmetry,
        min_eigenvalue,
        max_diagonal,
        cauchy_schwarz_violations,
        psd_tolerance,
    })
}

/// Stratified fold assignment: shuffles each class independently and deals
/// its members round-robin, so class proportions stay balanced per fold.
pub fn stratified_folds(labels: &[i64], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for class in classes {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < folds {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} members, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (slot, index) in members.into_iter().enumerate() {
            assignment[index] = slot % folds;
        }
    }
    Ok(assignment)
}

/// Cross-validated accuracy of a kernel classifier.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub folds: usize,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation over the fold accuracies.
    pub std_dev: f64,
}

/// 1-nearest-neighbor classification in the kernel-induced metric
/// `d(p, q)^2 = k_pp + k_qq - 2 k_pq`, under stratified k-fold CV.
pub fn knn_cv(
    values: &[f64],
    size: usize,
    labels: &[i64],
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    if labels.len() != size {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} graphs",
            labels.len(),
            size
        )));
    }
    if values.len() != size * size {
        return Err(Error::InvalidArgument("matrix shape mismatch".into()));
    }
    let fold_of = stratified_folds(labels, folds, seed)?;
    let mut fold_accuracy = Vec::with_capacity(folds);
    for fold in 0..folds {
        let mut correct = 0usize;
        let mut total = 0usize;
        for i in 0..size {
            if fold_of[i] != fold {
                continue;
            }
            total += 1;
            let mut best: Option<(f64, usize)> = None;
            for j in 0..size {
                if fold_of[j] == fold {
                    continue;
                }
                let d2 = values[i * size + i] + values[j * size + j] - 2.0 * values[i * size + j];
                if best.map_or(true, |(bd, _)| d2 < bd) {
                    best = Some((d2, j));
                }
            }
            let predicted = labels[best.expect("train side is non-empty").1];
            if predicted == labels[i] {
                correct += 1;
            }
        }
        fold_accuracy.push(correct as f64 / total as f64);
    }
    let mean_accuracy = fold_accuracy.iter().sum::<f64>() / folds as f64;
    let var = fold_accuracy
        .iter()
        .map(|a| (a - mean_accuracy) * (a - mean_accuracy))
        .sum::<f64>()
        / (folds as f64 - 1.0);
    Ok(CvReport {
        folds,
        fold_accuracy,
        mean_accuracy,
        std_dev: var.sqrt(),
    })
}
