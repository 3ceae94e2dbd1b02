//! `activelabel`: corpus checks, synthetic corpora, simulated-teacher
//! experiments, learning curves and the labeling server.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad input data, 3 runtime
//! failure.

mod curve;
mod plan;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use activelabel::corpus::{
    assign_labels, load_category_specs, load_corpus, write_category_specs, write_corpus, Document,
};
use activelabel::harness::{
    generate_synthetic_corpus, run_experiment, synthetic_category, Experiment, HarnessError,
    RunOptions, SyntheticCorpusSpec,
};
use activelabel::sampling::Strategy;
use activelabel_service::{CorpusEntry, EventStore, ServiceConfig};
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "activelabel", version, about = "Uncertainty sampling for binary text classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a corpus and report category sizes.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        categories: PathBuf,
    },
    /// Generate a synthetic corpus with one rare category.
    Synth(SynthArgs),
    /// Run a simulated-teacher experiment.
    Run(plan::RunArgs),
    /// Summarize a results file as learning curves.
    Curve {
        /// Results CSV written by `run`.
        results: PathBuf,
        /// Where to write the long-format curve CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve labeling sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output corpus TSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write the matching category spec (JSONL) here.
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    prior: Option<f64>,
    #[arg(long)]
    topic_vocab: Option<usize>,
    #[arg(long)]
    background_vocab: Option<usize>,
    #[arg(long)]
    topic_rate: Option<f64>,
    #[arg(long)]
    confusable_rate: Option<f64>,
    #[arg(long)]
    subtopics: Option<usize>,
    #[arg(long)]
    context_vocab: Option<usize>,
    #[arg(long)]
    context_rate: Option<f64>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Require `Authorization: Bearer <token>` on the API.
    #[arg(long, env = "ACTIVELABEL_TOKEN")]
    token: Option<String>,
    /// Directory for session event logs; sessions are in-memory without it.
    #[arg(long)]
    sessions: Option<PathBuf>,
    /// Static files to serve at `/` (the labeling UI).
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

/// An error with its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Runtime(e) => e,
        }
    }
}

pub type Outcome<T> = Result<T, Failure>;

/// Tags errors with the exit code they map to.
pub trait Classify<T> {
    fn usage(self) -> Outcome<T>;
    fn data(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn data(self) -> Outcome<T> {
        self.map_err(|e| Failure::Data(e.into()))
    }
    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn harness_failure(e: HarnessError) -> Failure {
    match e {
        HarnessError::Plan(_) => Failure::Usage(e.into()),
        HarnessError::Toml(_)
        | HarnessError::TooFewPositives { .. }
        | HarnessError::Corpus(_)
        | HarnessError::PlanMismatch(_) => Failure::Data(e.into()),
        _ => Failure::Runtime(e.into()),
    }
}

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
        .data()
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .runtime()?;
    }
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .runtime()
}

/// Loads a corpus, warning about skipped lines. Fails only when no line is
/// usable.
pub fn read_corpus(path: &Path) -> Outcome<Vec<Document>> {
    let report = load_corpus(open(path)?)
        .with_context(|| format!("reading {}", path.display()))
        .data()?;
    for issue in &report.skipped {
        eprintln!("warning: {}:{issue}", path.display());
    }
    if report.corpus.is_empty() {
        return Err(Failure::Data(anyhow!("{} has no usable documents", path.display())));
    }
    Ok(report.corpus.into_documents())
}

fn cmd_ingest(corpus: &Path, categories: &Path) -> Outcome<()> {
    let docs = read_corpus(corpus)?;
    let specs = load_category_specs(open(categories)?)
        .with_context(|| format!("reading {}", categories.display()))
        .data()?;
    let mut out = std::io::stdout().lock();
    let w = |out: &mut std::io::StdoutLock, s: String| writeln!(out, "{s}").runtime();
    w(&mut out, format!("documents\t{}", docs.len()))?;
    w(&mut out, "category\tcount\tfrequency".into())?;
    for spec in &specs {
        let count = assign_labels(&docs, spec).positives();
        let freq = count as f64 / docs.len() as f64;
        w(&mut out, format!("{}\t{count}\t{freq:.6}", spec.name))?;
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Outcome<()> {
    let defaults = SyntheticCorpusSpec::default();
    let spec = SyntheticCorpusSpec {
        size: args.size.unwrap_or(defaults.size),
        prior: args.prior.unwrap_or(defaults.prior),
        topic_vocab: args.topic_vocab.unwrap_or(defaults.topic_vocab),
        background_vocab: args.background_vocab.unwrap_or(defaults.background_vocab),
        topic_rate: args.topic_rate.unwrap_or(defaults.topic_rate),
        confusable_rate: args.confusable_rate.unwrap_or(defaults.confusable_rate),
        subtopics: args.subtopics.unwrap_or(defaults.subtopics),
        context_vocab: args.context_vocab.unwrap_or(defaults.context_vocab),
        context_rate: args.context_rate.unwrap_or(defaults.context_rate),
        seed: args.seed,
        ..defaults
    };
    spec.validate().map_err(harness_failure)?;
    let docs = generate_synthetic_corpus(&spec).map_err(harness_failure)?;
    let mut w = create(&args.out)?;
    write_corpus(&mut w, &docs).runtime()?;
    let category = synthetic_category();
    if let Some(path) = &args.categories {
        let mut w = create(path)?;
        write_category_specs(&mut w, std::slice::from_ref(&category)).runtime()?;
    }
    let positives = assign_labels(&docs, &category).positives();
    println!(
        "wrote {} documents ({positives} in category {:?}) to {}",
        docs.len(),
        category.name,
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: &plan::RunArgs) -> Outcome<()> {
    let resolved = plan::resolve(args)?;
    let docs = read_corpus(&resolved.corpus)?;
    let experiment = Experiment::prepare(resolved.plan, &docs).map_err(harness_failure)?;
    let total = experiment.triples().len();
    let progress = |e: &activelabel::harness::ManifestEntry| {
        eprintln!("done {}/{}/{} ({} rows)", e.category, e.strategy, e.run, e.rows);
    };
    let options = RunOptions {
        jobs: resolved.jobs,
        limit: None,
        progress: Some(&progress),
    };
    let summary = run_experiment(&experiment, &resolved.out, &options).map_err(harness_failure)?;
    println!(
        "triples: {total} total, {} run, {} already done",
        summary.triples_run, summary.triples_skipped
    );
    println!(
        "oracle reads: {}, test-label reads: {}",
        summary.oracle_reads, summary.held_out_reads
    );
    if let Some(path) = summary.results {
        println!("results: {} ({} rows)", path.display(), summary.rows);
    }
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> Outcome<()> {
    let docs = read_corpus(&args.corpus)?;
    let store = match &args.sessions {
        Some(dir) => EventStore::open(dir)
            .with_context(|| format!("cannot use {}", dir.display()))
            .runtime()?,
        None => EventStore::in_memory(),
    };
    let config = ServiceConfig {
        corpora: HashMap::from([("default".to_string(), CorpusEntry::new(docs))]),
        token: args.token.clone(),
        store,
        ui_dir: args.ui_dir.clone(),
    };
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .context("bad --host/--port")
        .usage()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .runtime()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))
            .runtime()?;
        eprintln!("listening on http://{}", listener.local_addr().runtime()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        activelabel_service::serve(listener, config, shutdown)
            .await
            .runtime()
    })
}

fn run(cli: Cli) -> Outcome<()> {
    match &cli.command {
        Command::Ingest { corpus, categories } => cmd_ingest(corpus, categories),
        Command::Synth(args) => cmd_synth(args),
        Command::Run(args) => cmd_run(args),
        Command::Curve { results, out } => curve::cmd_curve(results, out.as_deref()),
        Command::Serve(args) => cmd_serve(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

/// Strategy names for clap.
pub fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}
