//! Command-line front-end: dataset ingestion, Gram computation and export,
//! matrix verification, and a kernel 1-NN cross-validation baseline.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use htak::error::Result;
use htak::eval::{check_gram, knn_cv, stratified_folds, PSD_TOL};
use htak::export::{
    read_gram_csv, write_db_csv, write_gram_csv, write_hierarchy_csv, write_run_record,
    write_svm_precomputed, RunRecord,
};
use htak::kernel::GramMode;
use htak::{load_tu_dataset, GraphCollection, Pipeline, PipelineParams};

#[derive(Parser)]
#[command(name = "htak", version, about = "Hierarchical transitive-aligned graph kernel")]
struct Cli {
    /// Worker thread count (also honored via HTAK_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    #[value(name = "single-H", alias = "single-h")]
    SingleH,
    #[value(name = "sweep")]
    Sweep,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    #[value(name = "svm-precomputed")]
    SvmPrecomputed,
    /// Metadata is always written; listing it here is accepted for
    /// completeness.
    JsonMeta,
}

#[derive(clap::Args)]
struct DatasetArgs {
    /// Directory holding the TU-format files.
    #[arg(long)]
    dataset: PathBuf,
    /// File prefix, e.g. MUTAG for MUTAG_A.txt.
    #[arg(long)]
    prefix: String,
    /// Cap the embedding depth K below the computed longest shortest path.
    #[arg(long)]
    max_k: Option<u32>,
}

#[derive(clap::Args)]
struct ParamArgs {
    /// Hierarchy depth H.
    #[arg(long = "H", value_parser = clap::value_parser!(u32).range(1..=16), default_value_t = 5)]
    h_levels: u32,
    /// Level-size ratio in (0, 1).
    #[arg(long, default_value_t = 0.2, value_parser = parse_ratio)]
    ratio: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the kernel Gram matrix for a dataset and export it.
    Compute {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// single-H emits one Gram for H; sweep emits one per H in 1..=H.
        #[arg(long, value_enum, default_value = "single-H")]
        mode: Mode,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Gram export formats (repeatable / comma separated).
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![Format::Csv])]
        format: Vec<Format>,
        /// Export cosine-normalized values k_pq / sqrt(k_pp k_qq).
        #[arg(long)]
        normalize: bool,
    },
    /// Check a Gram CSV: symmetry, Cauchy-Schwarz, minimum eigenvalue.
    Verify {
        #[arg(long)]
        gram: PathBuf,
        /// Relative PSD tolerance on the minimum eigenvalue.
        #[arg(long, default_value_t = PSD_TOL)]
        tol: f64,
    },
    /// 1-NN cross-validation in kernel-induced distance.
    KnnCv {
        #[arg(long)]
        gram: PathBuf,
        /// Labels file, one integer per graph (TU graph_labels format).
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also write the stratified fold assignment as `graph,fold` CSV.
        #[arg(long)]
        dump_folds: Option<PathBuf>,
    },
    /// Dump per-graph embedding tables as CSV (vertex,k,entropy,valid).
    DumpDb {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Restrict the dump to one graph id.
        #[arg(long)]
        graph: Option<usize>,
    },
    /// Dump prototype hierarchies as CSV per depth k.
    DumpPrototypes {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn parse_ratio(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("ratio must lie strictly between 0 and 1, got {v}"))
    }
}

fn configure_threads(flag: Option<usize>) {
    let threads = flag.or_else(|| {
        std::env::var("HTAK_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if n > 0 {
            // Ignore failure: the global pool can only be set once.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn load(dataset: &DatasetArgs) -> Result<GraphCollection> {
    let start = Instant::now();
    let (collection, stats) = load_tu_dataset(&dataset.dataset, &dataset.prefix)?;
    eprintln!(
        "[load] {} graphs, {} nodes, {} edges ({} self-loops, {} duplicates dropped) in {:.1} ms",
        stats.graph_count,
        stats.node_count,
        stats.edge_count,
        stats.self_loops_dropped,
        stats.duplicate_edges_dropped,
        start.elapsed().as_secs_f64() * 1e3,
    );
    Ok(collection)
}

fn build_pipeline(collection: &GraphCollection, params: PipelineParams) -> Result<Pipeline> {
    let start = Instant::now();
    let pipeline = Pipeline::build(collection, params)?;
    for (stage, ms) in pipeline.timings() {
        eprintln!("[{stage}] {ms:.1} ms");
    }
    eprintln!(
        "[pipeline] K = {} (global {}) in {:.1} ms total",
        pipeline.k_max(),
        pipeline.global_k(),
        start.elapsed().as_secs_f64() * 1e3,
    );
    Ok(pipeline)
}

fn cmd_compute(
    dataset: DatasetArgs,
    params: ParamArgs,
    mode: Mode,
    out: PathBuf,
    formats: Vec<Format>,
    normalize: bool,
) -> Result<()> {
    let collection = load(&dataset)?;
    let pipeline = build_pipeline(
        &collection,
        PipelineParams {
            h_levels: params.h_levels,
            ratio: params.ratio,
            seed: params.seed,
            max_k: dataset.max_k,
        },
    )?;

    let start = Instant::now();
    let grams = match mode {
        Mode::SingleH => vec![pipeline.gram(params.h_levels)?],
        Mode::Sweep => pipeline.gram_sweep()?,
    };
    eprintln!(
        "[gram] {} matrix(es) of size {} in {:.1} ms",
        grams.len(),
        collection.len(),
        start.elapsed().as_secs_f64() * 1e3,
    );

    fs::create_dir_all(&out).map_err(|e| htak::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let mut artifacts = Vec::new();
    for gram in &grams {
        let h = gram.meta().h_levels;
        if formats.contains(&Format::Csv) {
            let name = format!("{}_gram_H{h}.csv", dataset.prefix);
            let path = out.join(&name);
            let mut w = BufWriter::new(File::create(&path).map_err(|e| htak::Error::Io {
                path: path.clone(),
                source: e,
            })?);
            write_gram_csv(gram, &mut w, normalize).map_err(|e| htak::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            eprintln!("[export] wrote {}", path.display());
            artifacts.push(name);
        }
        if formats.contains(&Format::SvmPrecomputed) {
            let labels = collection.labels().ok_or_else(|| {
                htak::Error::InvalidArgument(
                    "svm-precomputed export needs a graph_labels file".into(),
                )
            })?;
            let name = format!("{}_gram_H{h}.svm", dataset.prefix);
            let path = out.join(&name);
            let mut w = BufWriter::new(File::create(&path).map_err(|e| htak::Error::Io {
                path: path.clone(),
                source: e,
            })?);
            write_svm_precomputed(gram, &labels, &mut w, normalize)?;
            eprintln!("[export] wrote {}", path.display());
            artifacts.push(name);
        }
    }

    let record = RunRecord {
        dataset: dataset.dataset.display().to_string(),
        prefix: dataset.prefix.clone(),
        h_levels: params.h_levels,
        ratio: params.ratio,
        seed: params.seed,
        mode: match mode {
            Mode::SingleH => GramMode::SingleH,
            Mode::Sweep => GramMode::Sweep,
        },
        global_k: pipeline.global_k(),
        k_max: pipeline.k_max(),
        graph_count: collection.len(),
        normalized: normalize,
        fingerprint: format!("{:#018x}", pipeline.fingerprint()),
        artifacts,
        timings_ms: pipeline.timings().to_vec(),
    };
    let meta_path = out.join(format!("{}_meta.json", dataset.prefix));
    let mut w = BufWriter::new(File::create(&meta_path).map_err(|e| htak::Error::Io {
        path: meta_path.clone(),
        source: e,
    })?);
    write_run_record(&record, &mut w)?;
    eprintln!("[export] wrote {}", meta_path.display());
    Ok(())
}

fn cmd_verify(gram: PathBuf, tol: f64) -> Result<bool> {
    let loaded = read_gram_csv(&gram)?;
    let check = check_gram(&loaded.values, loaded.size, tol)?;
    println!("size: {}", check.size);
    println!(
        "symmetric: {} (max asymmetry {:.3e})",
        check.symmetric, check.max_asymmetry
    );
    println!("max diagonal: {}", check.max_diagonal);
    println!("min eigenvalue: {:.6e}", check.min_eigenvalue);
    println!(
        "cauchy-schwarz violations: {}",
        check.cauchy_schwarz_violations
    );
    println!(
        "psd check (min eig >= -{tol:e} * max diag): {}",
        if check.passes() { "PASS" } else { "FAIL" }
    );
    Ok(check.passes())
}

fn cmd_knn_cv(
    gram: PathBuf,
    labels_path: PathBuf,
    folds: usize,
    seed: u64,
    dump_folds: Option<PathBuf>,
) -> Result<()> {
    let loaded = read_gram_csv(&gram)?;
    let content = fs::read_to_string(&labels_path).map_err(|e| htak::Error::Io {
        path: labels_path.clone(),
        source: e,
    })?;
    let labels: Vec<i64> = content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<i64>().map_err(|_| htak::Error::Format {
                file: labels_path.display().to_string(),
                line: i + 1,
                message: format!("non-integer label {l:?}"),
            })
        })
        .collect::<Result<_>>()?;

    if let Some(path) = dump_folds {
        let assignment = stratified_folds(&labels, folds, seed)?;
        let mut w = BufWriter::new(File::create(&path).map_err(|e| htak::Error::Io {
            path: path.clone(),
            source: e,
        })?);
        writeln!(w, "graph,fold").map_err(|e| htak::Error::Io {
            path: path.clone(),
            source: e,
        })?;
        for (i, f) in assignment.iter().enumerate() {
            writeln!(w, "{i},{f}").map_err(|e| htak::Error::Io {
                path: path.clone(),
                source: e,
            })?;
        }
        eprintln!("[folds] wrote {}", path.display());
    }

    let report = knn_cv(&loaded.values, loaded.size, &labels, folds, seed)?;
    println!(
        "1-NN {}-fold accuracy: {:.4} +/- {:.4}",
        report.folds, report.mean_accuracy, report.std_dev
    );
    for (i, acc) in report.fold_accuracy.iter().enumerate() {
        println!("fold {i}: {acc:.4}");
    }
    Ok(())
}

fn cmd_dump_db(dataset: DatasetArgs, out: PathBuf, graph: Option<usize>) -> Result<()> {
    let collection = load(&dataset)?;
    let k_max = dataset
        .max_k
        .map_or(collection.global_k(), |cap| cap.min(collection.global_k()));
    fs::create_dir_all(&out).map_err(|e| htak::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let ids: Vec<usize> = match graph {
        Some(id) if id < collection.len() => vec![id],
        Some(id) => {
            return Err(htak::Error::InvalidArgument(format!(
                "graph {id} outside 0..{}",
                collection.len()
            )))
        }
        None => (0..collection.len()).collect(),
    };
    for id in ids {
        let table = htak::db::db_table(collection.graph(id), k_max)?;
        let path = out.join(format!("{}_db_{id}.csv", dataset.prefix));
        let mut w = BufWriter::new(File::create(&path).map_err(|e| htak::Error::Io {
            path: path.clone(),
            source: e,
        })?);
        write_db_csv(&table, &mut w).map_err(|e| htak::Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    eprintln!("[dump-db] wrote tables to {}", out.display());
    Ok(())
}

fn cmd_dump_prototypes(dataset: DatasetArgs, params: ParamArgs, out: PathBuf) -> Result<()> {
    let collection = load(&dataset)?;
    let pipeline = build_pipeline(
        &collection,
        PipelineParams {
            h_levels: params.h_levels,
            ratio: params.ratio,
            seed: params.seed,
            max_k: dataset.max_k,
        },
    )?;
    fs::create_dir_all(&out).map_err(|e| htak::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    for k in 1..=pipeline.k_max() {
        let path = out.join(format!("{}_prototypes_k{k}.csv", dataset.prefix));
        let mut w = BufWriter::new(File::create(&path).map_err(|e| htak::Error::Io {
            path: path.clone(),
            source: e,
        })?);
        write_hierarchy_csv(pipeline.hierarchy(k), &mut w).map_err(|e| htak::Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    eprintln!("[dump-prototypes] wrote hierarchies to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    let outcome = match cli.command {
        Command::Compute {
            dataset,
            params,
            mode,
            out,
            format,
            normalize,
        } => cmd_compute(dataset, params, mode, out, format, normalize).map(|()| true),
        Command::Verify { gram, tol } => cmd_verify(gram, tol),
        Command::KnnCv {
            gram,
            labels,
            folds,
            seed,
            dump_folds,
        } => cmd_knn_cv(gram, labels, folds, seed, dump_folds).map(|()| true),
        Command::DumpDb { dataset, out, graph } => cmd_dump_db(dataset, out, graph).map(|()| true),
        Command::DumpPrototypes {
            dataset,
            params,
            out,
        } => cmd_dump_prototypes(dataset, params, out).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
