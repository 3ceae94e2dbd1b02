//! Simulated-teacher experiments: starting subsamples, the random-sample
//! size schedule, synthetic corpora and a resumable experiment runner.

mod experiment;
mod plan;
mod protocol;
mod seeds;
mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::corpus::CorpusError;
use crate::evaluation::EvaluationError;
use crate::sampling::{OracleError, SamplingError};

pub use experiment::{
    run_experiment, strategies_in, Experiment, ExperimentSummary, ManifestEntry, RunOptions,
    Triple, TripleResult, MANIFEST_FILE, RESULTS_FILE,
};
pub use plan::{
    ExperimentPlan, DEFAULT_RANDOM_RUNS_PER_START, DEFAULT_STARTS, DEFAULT_TEST_FRACTION,
};
pub use protocol::{draw_starting_subsample, random_size_schedule, StartingSubsample, STARTING_POSITIVES};
pub use seeds::{derive_seed, run_seed, split_seed, start_seed};
pub use synthetic::{
    generate_synthetic_corpus, pseudo_word, synthetic_category, SyntheticCorpusSpec,
    SYNTHETIC_CATEGORY,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("plan file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("category {category:?} has {found} training positives; at least 3 are needed")]
    TooFewPositives { category: String, found: usize },
    #[error("{} holds results of a different plan or corpus", .0.display())]
    PlanMismatch(PathBuf),
    #[error("run {triple} read {reads} test labels")]
    Leakage { triple: String, reads: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
