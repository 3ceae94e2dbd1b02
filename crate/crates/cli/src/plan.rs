//! Resolving `run` settings: a flag beats the plan file, which beats the
//! built-in default.

use std::path::{Path, PathBuf};

use activelabel::corpus::load_category_specs;
use activelabel::harness::ExperimentPlan;
use activelabel::sampling::Strategy;
use anyhow::{anyhow, Context};
use clap::Args;
use serde::Deserialize;

use crate::{parse_strategy, Classify, Failure, Outcome};

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Plan file (TOML). Besides the plan fields it may set `corpus`,
    /// `categories_file`, `out` and `jobs`, relative to the file.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Category specs (JSONL); replaces the plan's categories.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Strategies to run, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
    pub strategy: Vec<Strategy>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Output directory (results, manifest, fragments).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub struct Resolved {
    pub plan: ExperimentPlan,
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub jobs: usize,
}

/// Keys a plan file may carry that are not part of the plan itself.
#[derive(Deserialize, Default)]
struct FileExtras {
    corpus: Option<PathBuf>,
    categories_file: Option<PathBuf>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
}

fn read_plan_file(path: &Path) -> Outcome<(ExperimentPlan, FileExtras)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .data()?;
    let mut table: toml::Table = text
        .parse()
        .with_context(|| format!("{} is not valid TOML", path.display()))
        .data()?;
    let mut extras = toml::Table::new();
    for key in ["corpus", "categories_file", "out", "jobs"] {
        if let Some(v) = table.remove(key) {
            extras.insert(key.to_owned(), v);
        }
    }
    let plan = ExperimentPlan::deserialize(toml::Value::Table(table))
        .with_context(|| format!("in {}", path.display()))
        .data()?;
    let extras = FileExtras::deserialize(toml::Value::Table(extras))
        .with_context(|| format!("in {}", path.display()))
        .data()?;
    let base = path.parent().unwrap_or(Path::new(""));
    let rebase = |p: Option<PathBuf>| p.map(|p| if p.is_relative() { base.join(p) } else { p });
    Ok((
        plan,
        FileExtras {
            corpus: rebase(extras.corpus),
            categories_file: rebase(extras.categories_file),
            out: rebase(extras.out),
            jobs: extras.jobs,
        },
    ))
}

pub fn resolve(args: &RunArgs) -> Outcome<Resolved> {
    let (mut plan, extras) = match &args.plan {
        Some(path) => read_plan_file(path)?,
        None => (ExperimentPlan::default(), FileExtras::default()),
    };
    if !args.strategy.is_empty() {
        plan.strategies = args.strategy.clone();
    }
    if let Some(v) = args.batch_size {
        plan.batch_size = v;
    }
    if let Some(v) = args.iterations {
        plan.iterations = v;
    }
    if let Some(v) = args.starts {
        plan.starts = v;
    }
    if let Some(v) = args.seed {
        plan.master_seed = v;
    }
    if let Some(v) = args.fraction {
        plan.selection_fraction = v;
    }
    if let Some(path) = args.categories.as_ref().or(extras.categories_file.as_ref()) {
        let file = std::fs::File::open(path)
            .with_context(|| format!("cannot open {}", path.display()))
            .data()?;
        plan.categories = load_category_specs(std::io::BufReader::new(file))
            .with_context(|| format!("reading {}", path.display()))
            .data()?;
    }
    let corpus = args
        .corpus
        .clone()
        .or(extras.corpus)
        .ok_or_else(|| Failure::Usage(anyhow!("no corpus: pass --corpus or set `corpus` in the plan")))?;
    let out = args
        .out
        .clone()
        .or(extras.out)
        .ok_or_else(|| Failure::Usage(anyhow!("no output directory: pass --out or set `out` in the plan")))?;
    let jobs = args.jobs.or(extras.jobs).unwrap_or(0);
    plan.validate().map_err(|e| Failure::Usage(e.into()))?;
    Ok(Resolved {
        plan,
        corpus,
        out,
        jobs,
    })
}
