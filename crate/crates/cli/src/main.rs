//! `mveb` command-line tool.
//!
//! Subcommands wire bundle files to the library: `compress` builds an index,
//! `search` ranks queries against it, `eval` scores a run with nDCG@k,
//! `sweep` tables many configs, `synth` generates benchmark corpora, and
//! `inspect` dumps bundle headers.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to
//! stderr; data goes to stdout or the named output files. All randomness
//! flows through explicit `--seed` flags, so identical invocations produce
//! byte-identical data outputs (reported timings excepted).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use mveb::eval::{
    evaluate_run, relevant_params, sweep, sweep_table_tsv, synergy_experiment, synth_corpus,
    SynthParams,
};
use mveb::ingest::{read_bundle, read_qrels, read_queries, write_bundle, write_qrels};
use mveb::model::{
    CompressedEmbeddingSet, CompressionConfig, CompressionMethod, PatchEmbeddingSet,
};
use mveb::pipeline::compress_corpus;
use mveb::retrieve::batch_search;

#[derive(Parser)]
#[command(name = "mveb", version, about = "Multi-vector embedding compression and retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a corpus bundle into an index bundle.
    Compress(CompressArgs),
    /// Rank queries against an index, printing a TSV of hits.
    Search(SearchArgs),
    /// Evaluate an index against queries and qrels with nDCG@k.
    Eval(EvalArgs),
    /// Compress and evaluate once per config, printing a TSV table.
    Sweep(SweepArgs),
    /// Generate a synthetic corpus, queries, and qrels.
    Synth(SynthArgs),
    /// Compare two-stage vs naive-merge distortion on a synthetic corpus.
    Synergy(SynergyArgs),
    /// Print bundle header and per-document shapes.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct MethodFlags {
    /// Compression method (snake_case or kebab-case).
    #[arg(long)]
    method: Option<String>,
    /// JSON file holding a compression config; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Adaptation factor (pruning strictness).
    #[arg(short = 'k', long, allow_hyphen_values = true)]
    k: Option<f64>,
    /// Merging factor.
    #[arg(short = 'm', long)]
    m: Option<usize>,
    /// Fixed pruning ratio in [0, 1).
    #[arg(long)]
    ratio: Option<f64>,
    /// Static global threshold.
    #[arg(long, allow_hyphen_values = true)]
    tau_global: Option<f64>,
    /// Attention-vs-similarity weight in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// De-duplication adaptation factor.
    #[arg(long, allow_hyphen_values = true)]
    k_dup: Option<f64>,
    #[arg(long)]
    num_pivots: Option<usize>,
    /// Seed for the random method.
    #[arg(long)]
    seed: Option<u64>,
}

impl MethodFlags {
    fn resolve(&self) -> Result<CompressionConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => {
                let file = File::open(path).map_err(|e| data_err(path, e))?;
                serde_json::from_reader(BufReader::new(file))
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            }
            None => CompressionConfig::default(),
        };
        if let Some(method) = &self.method {
            config.method =
                CompressionMethod::from_str(method).map_err(|e| CliError::Data(e.to_string()))?;
        }
        if let Some(v) = self.k {
            config.k = v;
        }
        if let Some(v) = self.m {
            config.m = v;
        }
        if let Some(v) = self.ratio {
            config.ratio = v;
        }
        if let Some(v) = self.tau_global {
            config.tau_global = v;
        }
        if let Some(v) = self.alpha {
            config.alpha = v;
        }
        if let Some(v) = self.k_dup {
            config.k_dup = v;
        }
        if let Some(v) = self.num_pivots {
            config.num_pivots = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct CompressArgs {
    /// Input corpus bundle.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output index bundle.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    method: MethodFlags,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Print one line per document to stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Uncompressed corpus bundle; when given, the report's pruning rate
    /// is measured against it (doc ids must match). Without it the index
    /// is taken at face value and the rate reads 0.
    #[arg(long)]
    original: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Input corpus bundle (uncompressed).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// JSON array of compression configs.
    #[arg(long)]
    configs: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Also write the rows as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct CorpusFlags {
    #[arg(long, default_value_t = 64)]
    docs: usize,
    #[arg(long, default_value_t = 4)]
    concepts: usize,
    #[arg(long, default_value_t = 8)]
    signal_per_concept: usize,
    #[arg(long, default_value_t = 32)]
    noise: usize,
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[arg(long, default_value_t = 0.05)]
    signal_sigma: f64,
    #[arg(long, default_value_t = 0.3)]
    noise_scale: f64,
    #[arg(long, default_value_t = 10.0)]
    importance_gap: f64,
    #[arg(long, default_value_t = 2)]
    queries_per_doc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CorpusFlags {
    fn to_params(&self) -> SynthParams {
        SynthParams {
            num_docs: self.docs,
            concepts_per_doc: self.concepts,
            signal_per_concept: self.signal_per_concept,
            noise_per_doc: self.noise,
            dim: self.dim,
            signal_sigma: self.signal_sigma,
            noise_scale: self.noise_scale,
            importance_gap: self.importance_gap,
            queries_per_doc: self.queries_per_doc,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    corpus: CorpusFlags,
    /// Prefix for corpus.mveb, queries.mveb, qrels.tsv.
    #[arg(long)]
    out_prefix: String,
}

#[derive(Args)]
struct SynergyArgs {
    #[command(flatten)]
    corpus: CorpusFlags,
    /// Pruning adaptation factor for the two-stage pipeline.
    #[arg(short = 'k', long, default_value_t = -0.75, allow_hyphen_values = true)]
    k: f64,
    /// Merging factor for the two-stage pipeline.
    #[arg(short = 'm', long, default_value_t = 4)]
    m: usize,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

enum CliError {
    Data(String),
}

fn data_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Write data to stdout; a closed pipe downstream ends the process quietly.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(CliError::Data(e.to_string())),
    }
}

impl From<mveb::Error> for CliError {
    fn from(e: mveb::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn open_bundle(path: &Path) -> Result<Vec<PatchEmbeddingSet>, CliError> {
    let file = File::open(path).map_err(|e| data_err(path, e))?;
    read_bundle(&mut BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn index_from_bundle(path: &Path) -> Result<Vec<CompressedEmbeddingSet>, CliError> {
    Ok(open_bundle(path)?
        .into_iter()
        .map(|d| {
            let n = d.n_patches();
            CompressedEmbeddingSet {
                doc_id: d.doc_id,
                embeddings: d.embeddings,
                kept_indices: (0..n).collect(),
                cluster_labels: None,
                original_count: n,
            }
        })
        .collect())
}

fn run_compress(args: &CompressArgs) -> Result<(), CliError> {
    let config = args.method.resolve()?;
    let docs = open_bundle(&args.input)?;
    let (index, report) = compress_corpus(&docs, &config, args.parallelism)?;
    if args.verbose {
        for doc in &report.per_doc {
            eprintln!(
                "{}\t{} -> {} -> {}\t{:.6}s",
                doc.doc_id, doc.n_original, doc.n_pruned, doc.n_compressed, doc.seconds
            );
        }
    }
    let out_docs: Vec<PatchEmbeddingSet> = index
        .iter()
        .map(|c| PatchEmbeddingSet::new(c.doc_id.clone(), c.embeddings.clone()))
        .collect();
    let file = File::create(&args.out).map_err(|e| data_err(&args.out, e))?;
    let mut writer = BufWriter::new(file);
    write_bundle(&out_docs, &mut writer)?;
    writer.flush().map_err(|e| data_err(&args.out, e))?;

    // deterministic summary on stdout; timings stay on stderr
    let summary = serde_json::json!({
        "method": config.method.name(),
        "params": relevant_params(&config),
        "docs": index.len(),
        "stats": report.stats,
    });
    emit(&format!(
        "{}\n",
        serde_json::to_string_pretty(&summary).expect("json")
    ))
}

fn run_search(args: &SearchArgs) -> Result<(), CliError> {
    let index = index_from_bundle(&args.index)?;
    let qfile = File::open(&args.queries).map_err(|e| data_err(&args.queries, e))?;
    let queries = read_queries(&mut BufReader::new(qfile))?;
    let results = batch_search(&index, &queries, args.top_k, args.parallelism)?;
    let mut table = String::new();
    for result in &results {
        for (rank, (doc_id, score)) in result.hits.iter().enumerate() {
            table.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                result.query_id,
                rank + 1,
                doc_id,
                score
            ));
        }
    }
    emit(&table)
}

fn run_eval(args: &EvalArgs) -> Result<(), CliError> {
    let mut index = index_from_bundle(&args.index)?;
    if let Some(original) = &args.original {
        let originals = open_bundle(original)?;
        let counts: std::collections::HashMap<&str, usize> = originals
            .iter()
            .map(|d| (d.doc_id.as_str(), d.n_patches()))
            .collect();
        for doc in &mut index {
            doc.original_count = *counts.get(doc.doc_id.as_str()).ok_or_else(|| {
                CliError::Data(format!(
                    "doc {} in the index is missing from {}",
                    doc.doc_id,
                    original.display()
                ))
            })?;
        }
    }
    let qfile = File::open(&args.queries).map_err(|e| data_err(&args.queries, e))?;
    let queries = read_queries(&mut BufReader::new(qfile))?;
    let rfile = File::open(&args.qrels).map_err(|e| data_err(&args.qrels, e))?;
    let qrels = read_qrels(&mut BufReader::new(rfile))?;
    let report = evaluate_run(&index, &queries, &qrels, args.k, args.parallelism)?;
    let json = serde_json::to_string_pretty(&report).expect("json");
    match &args.out {
        Some(path) => std::fs::write(path, json + "\n").map_err(|e| data_err(path, e)),
        None => emit(&format!("{json}\n")),
    }
}

fn run_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let docs = open_bundle(&args.input)?;
    let qfile = File::open(&args.queries).map_err(|e| data_err(&args.queries, e))?;
    let queries = read_queries(&mut BufReader::new(qfile))?;
    let rfile = File::open(&args.qrels).map_err(|e| data_err(&args.qrels, e))?;
    let qrels = read_qrels(&mut BufReader::new(rfile))?;
    let cfile = File::open(&args.configs).map_err(|e| data_err(&args.configs, e))?;
    let configs: Vec<CompressionConfig> = serde_json::from_reader(BufReader::new(cfile))
        .map_err(|e| CliError::Data(format!("{}: {e}", args.configs.display())))?;

    let rows = sweep(&docs, &queries, &qrels, &configs, args.k, args.parallelism);
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&rows).expect("json");
        std::fs::write(path, json + "\n").map_err(|e| data_err(path, e))?;
    }
    emit(&sweep_table_tsv(&rows))
}

fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    let (docs, queries, qrels) = synth_corpus(&args.corpus.to_params())?;

    let query_docs: Vec<PatchEmbeddingSet> = queries
        .iter()
        .map(|q| PatchEmbeddingSet::new(q.query_id.clone(), q.embeddings.clone()))
        .collect();

    let mut corpus_out = create_output(&args.out_prefix, "corpus.mveb")?;
    write_bundle(&docs, &mut corpus_out)?;
    corpus_out.flush().map_err(|e| CliError::Data(e.to_string()))?;

    let mut queries_out = create_output(&args.out_prefix, "queries.mveb")?;
    write_bundle(&query_docs, &mut queries_out)?;
    queries_out.flush().map_err(|e| CliError::Data(e.to_string()))?;

    let mut qrels_out = create_output(&args.out_prefix, "qrels.tsv")?;
    write_qrels(&qrels, &mut qrels_out)?;
    qrels_out.flush().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}

fn create_output(prefix: &str, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = PathBuf::from(format!("{prefix}{name}"));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| data_err(&path, e))?;
        }
    }
    let file = File::create(&path).map_err(|e| data_err(&path, e))?;
    eprintln!("writing {}", path.display());
    Ok(BufWriter::new(file))
}

fn run_synergy(args: &SynergyArgs) -> Result<(), CliError> {
    let report = synergy_experiment(&args.corpus.to_params(), args.k, args.m)?;
    emit(&format!(
        "{}\n",
        serde_json::to_string_pretty(&report).expect("json")
    ))
}

fn run_inspect(args: &InspectArgs) -> Result<(), CliError> {
    let docs = open_bundle(&args.input)?;
    let mut listing = format!("bundle\tversion=1\tdocs={}\n", docs.len());
    for doc in &docs {
        let mut extras = Vec::new();
        if doc.importance.is_some() {
            extras.push("importance".to_owned());
        }
        if doc.eos_embedding.is_some() {
            extras.push("eos".to_owned());
        }
        if let Some((r, c)) = doc.grid_shape {
            extras.push(format!("grid={r}x{c}"));
        }
        listing.push_str(&format!(
            "{}\tn={}\td={}\t{}\n",
            doc.doc_id,
            doc.n_patches(),
            doc.dim(),
            extras.join(",")
        ));
    }
    emit(&listing)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are not usage errors
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match &cli.command {
        Command::Compress(args) => run_compress(args),
        Command::Search(args) => run_search(args),
        Command::Eval(args) => run_eval(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Synth(args) => run_synth(args),
        Command::Synergy(args) => run_synergy(args),
        Command::Inspect(args) => run_inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
