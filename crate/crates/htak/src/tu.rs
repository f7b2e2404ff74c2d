//! TU-Dortmund benchmark dataset format.
//!
//! A dataset `PREFIX` in directory `dir` consists of:
//!
//! * `PREFIX_A.txt` — one edge per line as `i, j`, 1-indexed global node
//!   ids; either or both directions may be listed, the file is read as an
//!   undirected edge set.
//! * `PREFIX_graph_indicator.txt` — line `i` holds the 1-indexed id of the
//!   graph that node `i` belongs to.
//! * `PREFIX_graph_labels.txt` — optional, one integer class label per graph.
//!
//! Node/edge attribute files (`_node_labels.txt`, `_edge_labels.txt`, ...)
//! are ignored: the kernel operates on un-attributed graphs.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphCollection};

/// What ingestion saw, including content silently normalized away.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub graph_count: usize,
    pub node_count: usize,
    /// Undirected edges after deduplication.
    pub edge_count: usize,
    pub self_loops_dropped: usize,
    pub duplicate_edges_dropped: usize,
    pub labels_present: bool,
}

fn read_file(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile { path: path.into() });
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_int(token: &str, file: &str, line: usize) -> Result<i64> {
    token
        .trim()
        .parse::<i64>()
        .map_err(|_| Error::format(file, line, format!("non-integer token {:?}", token.trim())))
}

/// Non-empty lines of `content` with their 1-based line numbers.
fn numbered_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Load a TU-format dataset `prefix` from `directory`.
pub fn load_tu_dataset(directory: &Path, prefix: &str) -> Result<(GraphCollection, LoadStats)> {
    let a_path = directory.join(format!("{prefix}_A.txt"));
    let ind_path = directory.join(format!("{prefix}_graph_indicator.txt"));
    let lab_path = directory.join(format!("{prefix}_graph_labels.txt"));

    let ind_name = ind_path.file_name().unwrap().to_string_lossy().into_owned();
    let ind_content = read_file(&ind_path)?;
    let mut indicator: Vec<u32> = Vec::new();
    for (line, text) in numbered_lines(&ind_content) {
        let gid = parse_int(text, &ind_name, line)?;
        if gid < 1 {
            return Err(Error::format(
                &ind_name,
                line,
                format!("graph id {gid} is not positive"),
            ));
        }
        indicator.push(gid as u32 - 1);
    }
    let node_count = indicator.len();
    let graph_count = indicator.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
    if graph_count == 0 {
        return Err(Error::format(&ind_name, 1, "empty graph_indicator file"));
    }

    // Local index of each node within its graph, in node-id order.
    let mut local_index = vec![0u32; node_count];
    let mut graph_sizes = vec![0u32; graph_count];
    for (node, &g) in indicator.iter().enumerate() {
        local_index[node] = graph_sizes[g as usize];
        graph_sizes[g as usize] += 1;
    }

    let a_name = a_path.file_name().unwrap().to_string_lossy().into_owned();
    let a_content = read_file(&a_path)?;
    let mut edges: Vec<Vec<(u32, u32)>> = vec![Vec::new(); graph_count];
    // Seen directions per undirected pair: bit 0 = (min,max), bit 1 = (max,min).
    let mut seen: HashMap<(u32, u32), u8> = HashMap::new();
    let mut self_loops = 0usize;
    let mut duplicates = 0usize;
    for (line, text) in numbered_lines(&a_content) {
        let mut parts = text.split(',');
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::format(
                    &a_name,
                    line,
                    format!("expected \"i, j\", got {text:?}"),
                ))
            }
        };
        let u = parse_int(a, &a_name, line)?;
        let v = parse_int(b, &a_name, line)?;
        for &x in &[u, v] {
            if x < 1 || x as usize > node_count {
                return Err(Error::format(
                    &a_name,
                    line,
                    format!("node {x} not present in {ind_name} (1..={node_count})"),
                ));
            }
        }
        let (u, v) = (u as u32 - 1, v as u32 - 1);
        if u == v {
            self_loops += 1;
            continue;
        }
        let gu = indicator[u as usize];
        if gu != indicator[v as usize] {
            return Err(Error::format(
                &a_name,
                line,
                format!("edge ({}, {}) crosses graph boundaries", u + 1, v + 1),
            ));
        }
        let key = (u.min(v), u.max(v));
        let dir_bit = if u <= v { 1u8 } else { 2u8 };
        let flags = seen.entry(key).or_insert(0);
        if *flags == 0 {
            edges[gu as usize].push((local_index[u as usize], local_index[v as usize]));
        }
        if *flags & dir_bit != 0 {
            duplicates += 1;
        }
        *flags |= dir_bit;
    }

    let mut labels: Option<Vec<i64>> = None;
    if lab_path.is_file() {
        let lab_name = lab_path.file_name().unwrap().to_string_lossy().into_owned();
        let lab_content = read_file(&lab_path)?;
        let mut parsed = Vec::with_capacity(graph_count);
        for (line, text) in numbered_lines(&lab_content) {
            if parsed.len() == graph_count {
                return Err(Error::format(
                    &lab_name,
                    line,
                    format!("more labels than the {graph_count} graphs in {ind_name}"),
                ));
            }
            parsed.push(parse_int(text, &lab_name, line)?);
        }
        if parsed.len() != graph_count {
            return Err(Error::format(
                &lab_name,
                parsed.len() + 1,
                format!("{} labels for {} graphs", parsed.len(), graph_count),
            ));
        }
        labels = Some(parsed);
    }

    let mut graphs = Vec::with_capacity(graph_count);
    let mut edge_count = 0usize;
    for (g, edge_list) in edges.iter().enumerate() {
        edge_count += edge_list.len();
        let mut graph = Graph::from_edges(graph_sizes[g] as usize, edge_list)?;
        if let Some(labels) = &labels {
            graph = graph.with_label(labels[g]);
        }
        graphs.push(graph);
    }

    let stats = LoadStats {
        graph_count,
        node_count,
        edge_count,
        self_loops_dropped: self_loops,
        duplicate_edges_dropped: duplicates,
        labels_present: labels.is_some(),
    };
    let collection = GraphCollection::new(prefix, graphs)?;
    Ok((collection, stats))
}

/// Write `collection` back out in TU format (both edge directions listed,
/// as published datasets do). Labels are written only when every graph
/// carries one.
pub fn save_tu_dataset(collection: &GraphCollection, directory: &Path, prefix: &str) -> Result<()> {
    fs::create_dir_all(directory).map_err(|e| Error::io(directory, e))?;
    let write = |name: String, content: String| -> Result<PathBuf> {
        let path = directory.join(name);
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        file.write_all(content.as_bytes())
            .map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };

    let mut a = String::new();
    let mut ind = String::new();
    let mut offset = 1u64; // global 1-based id of each graph's first node
    for graph in collection.graphs() {
        for v in 0..graph.vertex_count() as u32 {
            ind.push_str(&format!("{}\n", graph.id() + 1));
            for &u in graph.neighbors(v) {
                a.push_str(&format!("{}, {}\n", offset + v as u64, offset + u as u64));
            }
        }
        offset += graph.vertex_count() as u64;
    }
    write(format!("{prefix}_A.txt"), a)?;
    write(format!("{prefix}_graph_indicator.txt"), ind)?;
    if let Some(labels) = collection.labels() {
        let content: String = labels.iter().map(|l| format!("{l}\n")).collect();
        write(format!("{prefix}_graph_labels.txt"), content)?;
    }
    Ok(())
}
