//! File formats: Gram CSV, precomputed-kernel SVM export, run metadata,
//! and debug dumps of tables and hierarchies.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::db::DbTable;
use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::prototype::PrototypeHierarchy;

/// Gram CSV: a header row of graph ids, then one row of values per graph.
/// Unnormalized kernels are exact integers and written as such; normalized
/// values use the shortest round-trip float form.
pub fn write_gram_csv<W: Write>(gram: &GramMatrix, out: &mut W, normalize: bool) -> io::Result<()> {
    let size = gram.size();
    let header: Vec<String> = (0..size).map(|i| i.to_string()).collect();
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for p in 0..size {
        line.clear();
        for q in 0..size {
            if q > 0 {
                line.push(',');
            }
            if normalize {
                line.push_str(&format!("{}", gram.normalized_value(p, q)));
            } else {
                line.push_str(&format!("{}", gram.value(p, q)));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// A Gram matrix re-read from CSV.
#[derive(Debug, Clone)]
pub struct LoadedGram {
    pub ids: Vec<String>,
    pub size: usize,
    /// Row-major `size x size`.
    pub values: Vec<f64>,
}

pub fn read_gram_csv(path: &Path) -> Result<LoadedGram> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    if !path.is_file() {
        return Err(Error::MissingFile { path: path.into() });
    }
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(&name, 1, "empty file"))?;
    let ids: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let size = ids.len();
    let mut values = Vec::with_capacity(size * size);
    let mut rows = 0usize;
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        rows += 1;
        let mut cols = 0usize;
        for token in line.split(',') {
            let v: f64 = token.trim().parse().map_err(|_| {
                Error::format(&name, idx + 1, format!("non-numeric token {:?}", token.trim()))
            })?;
            values.push(v);
            cols += 1;
        }
        if cols != size {
            return Err(Error::format(
                &name,
                idx + 1,
                format!("expected {size} columns, found {cols}"),
            ));
        }
    }
    if rows != size {
        return Err(Error::format(
            &name,
            rows + 1,
            format!("expected {size} rows, found {rows}"),
        ));
    }
    Ok(LoadedGram { ids, size, values })
}

/// Precomputed-kernel export consumable by standard C-SVM tooling:
/// `<label> 0:<serial> 1:<K(i,1)> ... T:<K(i,T)>` with 1-based serials.
pub fn write_svm_precomputed<W: Write>(
    gram: &GramMatrix,
    labels: &[i64],
    out: &mut W,
    normalize: bool,
) -> Result<()> {
    if labels.len() != gram.size() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} graphs",
            labels.len(),
            gram.size()
        )));
    }
    let mut line = String::new();
    for (i, label) in labels.iter().enumerate() {
        line.clear();
        line.push_str(&format!("{label} 0:{}", i + 1));
        for j in 0..gram.size() {
            if normalize {
                line.push_str(&format!(" {}:{}", j + 1, gram.normalized_value(i, j)));
            } else {
                line.push_str(&format!(" {}:{}", j + 1, gram.value(i, j)));
            }
        }
        writeln!(out, "{line}").map_err(|e| Error::io("<svm export>", e))?;
    }
    Ok(())
}

/// Run sidecar written next to every set of artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub dataset: String,
    pub prefix: String,
    pub h_levels: u32,
    pub ratio: f64,
    pub seed: u64,
    pub mode: crate::kernel::GramMode,
    pub global_k: u32,
    pub k_max: u32,
    pub graph_count: usize,
    pub normalized: bool,
    pub fingerprint: String,
    pub artifacts: Vec<String>,
    /// Stage wall times, milliseconds.
    pub timings_ms: Vec<(String, f64)>,
}

pub fn write_run_record<W: Write>(record: &RunRecord, out: &mut W) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, record)
        .map_err(|e| Error::InvalidArgument(format!("metadata serialization failed: {e}")))?;
    out.write_all(b"\n")
        .map_err(|e| Error::io("<metadata>", e))?;
    Ok(())
}

/// Debug dump of one table: `vertex,k,entropy,valid`.
pub fn write_db_csv<W: Write>(table: &DbTable, out: &mut W) -> io::Result<()> {
    writeln!(out, "vertex,k,entropy,valid")?;
    for v in 0..table.vertex_count() {
        for k in 1..=table.k_max() {
            match table.entropy(v, k) {
                Some(h) => writeln!(out, "{v},{k},{h},true")?,
                None => writeln!(out, "{v},{k},,false")?,
            }
        }
    }
    Ok(())
}

/// Debug dump of one hierarchy: `level,centroid_index,c1,...,ck`.
pub fn write_hierarchy_csv<W: Write>(
    hierarchy: &PrototypeHierarchy,
    out: &mut W,
) -> io::Result<()> {
    let coords: Vec<String> = (1..=hierarchy.dim()).map(|d| format!("c{d}")).collect();
    writeln!(out, "level,centroid_index,{}", coords.join(","))?;
    for h in 1..=hierarchy.level_count() {
        let level = hierarchy.level(h);
        for (i, point) in level.iter().enumerate() {
            let coords: Vec<String> = point.iter().map(|x| format!("{x}")).collect();
            writeln!(out, "{h},{i},{}", coords.join(","))?;
        }
    }
    Ok(())
}
