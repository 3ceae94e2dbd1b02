//! Pool-based sampling: selection strategies and the label-retrain loop.

mod active;
mod pool;
mod select;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, LossMatrix, DEFAULT_SELECTION_FRACTION};

pub use active::{
    run_active_loop, ActiveLoop, AuditedOracle, IterationLog, LabelOracle, LoopFailure,
    OracleError, Proposal, RunOutcome,
};
pub use pool::{DocPool, PoolDoc};
pub use select::{random_permutation, select_random, select_relevant, select_uncertain};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("batch size {0} is invalid: uncertainty sampling needs an even size of at least 2")]
    InvalidBatchSize(usize),
    #[error("cannot sample {requested} documents from a pool of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("the starting set is empty")]
    EmptyStartingSet,
    #[error("document {0:?} is not in the pool or was already labeled")]
    NotInPool(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uncertainty,
    Relevance,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Uncertainty, Strategy::Relevance, Strategy::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Uncertainty => "uncertainty",
            Strategy::Relevance => "relevance",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uncertainty" => Ok(Strategy::Uncertainty),
            "relevance" => Ok(Strategy::Relevance),
            "random" => Ok(Strategy::Random),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

pub const DEFAULT_BATCH_SIZE: usize = 4;
pub const DEFAULT_ITERATIONS: usize = 249;

/// Parameters of one sampling run. `batch_size` is the number of documents
/// labeled per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub selection_fraction: f64,
    pub loss: LossMatrix,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            iterations: DEFAULT_ITERATIONS,
            strategy: Strategy::Uncertainty,
            seed: 0,
            selection_fraction: DEFAULT_SELECTION_FRACTION,
            loss: LossMatrix::min_error(),
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        let b = self.batch_size;
        if b == 0 || (self.strategy == Strategy::Uncertainty && (b < 2 || b % 2 != 0)) {
            return Err(SamplingError::InvalidBatchSize(b));
        }
        let f = self.selection_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(ClassifierError::InvalidFraction(f).into());
        }
        self.loss.validate()?;
        Ok(())
    }
}
