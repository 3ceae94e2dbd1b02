//! The iterative sampling loop: score the pool, pick a batch, have the
//! teacher label it, retrain on everything labeled so far.

use std::collections::{BTreeSet, HashSet};
use std::ops::Deref;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{train, Classifier};
use crate::corpus::{Label, LabelMap, LabeledExample};

use super::pool::DocPool;
use super::select::{random_permutation, select_relevant, select_uncertain};
use super::{SamplingConfig, SamplingError, Strategy};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("oracle could not label {doc_id:?}: {reason}")]
pub struct OracleError {
    pub doc_id: String,
    pub reason: String,
}

/// Source of true labels: a lookup table in simulation, a person otherwise.
pub trait LabelOracle {
    fn label(&self, doc_id: &str) -> Result<Label, OracleError>;
}

impl LabelOracle for LabelMap {
    fn label(&self, doc_id: &str) -> Result<Label, OracleError> {
        self.get(doc_id).ok_or_else(|| OracleError {
            doc_id: doc_id.to_owned(),
            reason: "no label".into(),
        })
    }
}

impl<F> LabelOracle for F
where
    F: Fn(&str) -> Result<Label, OracleError>,
{
    fn label(&self, doc_id: &str) -> Result<Label, OracleError> {
        self(doc_id)
    }
}

/// Wraps an oracle and counts every read, flagging reads of doc ids that
/// belong to a held-out set.
pub struct AuditedOracle<'a, O: ?Sized> {
    inner: &'a O,
    held_out: &'a HashSet<String>,
    reads: AtomicUsize,
    held_out_reads: AtomicUsize,
}

impl<'a, O: LabelOracle + ?Sized> AuditedOracle<'a, O> {
    pub fn new(inner: &'a O, held_out: &'a HashSet<String>) -> Self {
        Self {
            inner,
            held_out,
            reads: AtomicUsize::new(0),
            held_out_reads: AtomicUsize::new(0),
        }
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn held_out_reads(&self) -> usize {
        self.held_out_reads.load(Ordering::Relaxed)
    }
}

impl<O: LabelOracle + ?Sized> LabelOracle for AuditedOracle<'_, O> {
    fn label(&self, doc_id: &str) -> Result<Label, OracleError> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        if self.held_out.contains(doc_id) {
            self.held_out_reads.fetch_add(1, Ordering::Relaxed);
        }
        self.inner.label(doc_id)
    }
}

/// One completed iteration of the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub selected: Vec<String>,
    pub labels: Vec<Label>,
    pub labeled_size: usize,
    /// Snapshot id of the classifier trained at the end of the iteration.
    pub classifier: String,
}

impl IterationLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("iteration log serializes")
    }
}

/// A document chosen for labeling, with its posterior at selection time.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub index: usize,
    pub doc_id: String,
    pub posterior: f64,
}

/// State of a sampling run over a fixed pool.
///
/// Each iteration is split in two so a human can label in between:
/// [`propose`](Self::propose) picks a batch and [`commit`](Self::commit)
/// records its labels and retrains. [`step`](Self::step) does both with an
/// oracle.
///
/// `P` is how the loop holds its pool: a plain reference, or an `Arc` when
/// the loop has to own it.
#[derive(Clone, Debug)]
pub struct ActiveLoop<P> {
    pool: P,
    config: SamplingConfig,
    required: BTreeSet<String>,
    labeled: Vec<LabeledExample>,
    unlabeled: Vec<usize>,
    random_order: Vec<usize>,
    random_cursor: usize,
    classifier: Classifier,
    iteration: usize,
}

impl<P: Deref<Target = DocPool>> ActiveLoop<P> {
    /// Trains the initial classifier on `starting`. Starting documents that
    /// are in the pool are removed from it, and every token of the starting
    /// set becomes a required feature.
    pub fn new(
        pool: P,
        starting: Vec<LabeledExample>,
        config: SamplingConfig,
    ) -> Result<Self, SamplingError> {
        config.validate()?;
        if starting.is_empty() {
            return Err(SamplingError::EmptyStartingSet);
        }
        let required: BTreeSet<String> = starting
            .iter()
            .flat_map(|e| e.tokens.iter().cloned())
            .collect();
        let classifier = train(&starting, &required, config.selection_fraction, config.loss)?;

        let taken: HashSet<usize> = starting
            .iter()
            .filter_map(|e| pool.index_of(&e.doc_id))
            .collect();
        let unlabeled: Vec<usize> = (0..pool.len()).filter(|i| !taken.contains(i)).collect();
        let random_order = if config.strategy == Strategy::Random {
            random_permutation(&unlabeled, config.seed)
        } else {
            Vec::new()
        };

        Ok(Self {
            pool,
            config,
            required,
            labeled: starting,
            unlabeled,
            random_order,
            random_cursor: 0,
            classifier,
            iteration: 0,
        })
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn labeled(&self) -> &[LabeledExample] {
        &self.labeled
    }

    pub fn required(&self) -> &BTreeSet<String> {
        &self.required
    }

    /// Pool indices not yet labeled, ascending.
    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn remaining(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &SamplingConfig {
        &self.config
    }

    pub fn pool(&self) -> &DocPool {
        self.pool.deref()
    }

    /// Posteriors of every unlabeled document, aligned with
    /// [`unlabeled`](Self::unlabeled).
    pub fn pool_posteriors(&self) -> Vec<f64> {
        self.pool.posteriors(&self.classifier, &self.unlabeled)
    }

    /// Chooses the next batch under the configured strategy. Empty when the
    /// pool is exhausted. Does not change any state.
    pub fn propose(&self) -> Vec<Proposal> {
        let b = self.config.batch_size;
        let (indices, posteriors): (Vec<usize>, Vec<f64>) = match self.config.strategy {
            Strategy::Uncertainty | Strategy::Relevance => {
                let ps = self.pool_posteriors();
                let pairs: Vec<(usize, f64)> = self.unlabeled.iter().copied().zip(ps).collect();
                let chosen = if self.config.strategy == Strategy::Uncertainty {
                    select_uncertain(&pairs, b).expect("batch size validated")
                } else {
                    select_relevant(&pairs, b)
                };
                let lookup = |i: usize| {
                    let pos = self.unlabeled.binary_search(&i).expect("selected from pool");
                    pairs[pos].1
                };
                let ps = chosen.iter().map(|&i| lookup(i)).collect();
                (chosen, ps)
            }
            Strategy::Random => {
                let chosen: Vec<usize> = self.random_order[self.random_cursor..]
                    .iter()
                    .copied()
                    .filter(|i| self.unlabeled.binary_search(i).is_ok())
                    .take(b)
                    .collect();
                let ps = self.pool.posteriors(&self.classifier, &chosen);
                (chosen, ps)
            }
        };
        indices
            .into_iter()
            .zip(posteriors)
            .map(|(index, posterior)| Proposal {
                index,
                doc_id: self.pool.doc(index).doc_id.clone(),
                posterior,
            })
            .collect()
    }

    /// Moves the documents at `indices` into the labeled set with `labels`
    /// and retrains from scratch. On error nothing changes.
    pub fn commit(&mut self, indices: &[usize], labels: &[Label]) -> Result<IterationLog, SamplingError> {
        assert_eq!(indices.len(), labels.len(), "one label per document");
        let mut seen = HashSet::new();
        for &i in indices {
            if i >= self.pool.len() || self.unlabeled.binary_search(&i).is_err() || !seen.insert(i) {
                let id = if i < self.pool.len() {
                    self.pool.doc(i).doc_id.clone()
                } else {
                    format!("#{i}")
                };
                return Err(SamplingError::NotInPool(id));
            }
        }

        let mut labeled = self.labeled.clone();
        for (&i, &label) in indices.iter().zip(labels) {
            let doc = self.pool.doc(i);
            labeled.push(LabeledExample::new(doc.doc_id.clone(), doc.tokens.clone(), label));
        }
        let classifier = train(
            &labeled,
            &self.required,
            self.config.selection_fraction,
            self.config.loss,
        )?;

        self.labeled = labeled;
        self.classifier = classifier;
        self.unlabeled.retain(|i| !seen.contains(i));
        if self.config.strategy == Strategy::Random {
            while self.random_cursor < self.random_order.len()
                && self
                    .unlabeled
                    .binary_search(&self.random_order[self.random_cursor])
                    .is_err()
            {
                self.random_cursor += 1;
            }
        }
        self.iteration += 1;

        Ok(IterationLog {
            iteration: self.iteration,
            selected: indices.iter().map(|&i| self.pool.doc(i).doc_id.clone()).collect(),
            labels: labels.to_vec(),
            labeled_size: self.labeled.len(),
            classifier: self.classifier.snapshot_id(),
        })
    }

    /// One full iteration with `oracle` as the teacher. `Ok(None)` once the
    /// pool is exhausted. If the oracle fails no document is moved.
    pub fn step<O: LabelOracle + ?Sized>(&mut self, oracle: &O) -> Result<Option<IterationLog>, SamplingError> {
        let batch = self.propose();
        if batch.is_empty() {
            return Ok(None);
        }
        let labels = batch
            .iter()
            .map(|p| oracle.label(&p.doc_id))
            .collect::<Result<Vec<_>, _>>()?;
        let indices: Vec<usize> = batch.iter().map(|p| p.index).collect();
        self.commit(&indices, &labels).map(Some)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub logs: Vec<IterationLog>,
    pub classifier: Classifier,
    pub labeled: Vec<LabeledExample>,
}

/// A failed run, carrying the iterations that completed before the failure.
#[derive(Debug, Error)]
#[error("sampling run failed after {} iterations: {error}", logs.len())]
pub struct LoopFailure {
    pub logs: Vec<IterationLog>,
    #[source]
    pub error: SamplingError,
}

/// Runs up to `config.iterations` iterations, stopping early if the pool
/// runs out.
pub fn run_active_loop<O: LabelOracle + ?Sized>(
    pool: &DocPool,
    oracle: &O,
    starting: Vec<LabeledExample>,
    config: SamplingConfig,
) -> Result<RunOutcome, LoopFailure> {
    let iterations = config.iterations;
    let mut state = ActiveLoop::new(pool, starting, config).map_err(|error| LoopFailure {
        logs: Vec::new(),
        error,
    })?;
    let mut logs = Vec::new();
    for _ in 0..iterations {
        match state.step(oracle) {
            Ok(Some(log)) => logs.push(log),
            Ok(None) => break,
            Err(error) => return Err(LoopFailure { logs, error }),
        }
    }
    Ok(RunOutcome {
        logs,
        classifier: state.classifier.clone(),
        labeled: state.labeled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Document};

    fn toy_pool(n: usize) -> (DocPool, LabelMap) {
        let mut docs = Vec::new();
        let mut labels = LabelMap::new();
        for i in 0..n {
            let positive = i % 7 == 0;
            let title = if positive {
                format!("savings bond rate w{}", i % 11)
            } else {
                format!("football game w{} v{}", i % 11, i % 5)
            };
            let id = format!("d{i:04}");
            labels.insert(id.clone(), Label::from_bool(positive));
            docs.push(Document::new(id, "", title));
        }
        (DocPool::from_documents(&docs), labels)
    }

    fn starting(titles: &[&str]) -> Vec<LabeledExample> {
        titles
            .iter()
            .enumerate()
            .map(|(i, t)| LabeledExample::new(format!("s{i}"), tokenize(t), Label::Positive))
            .collect()
    }

    #[test]
    fn zero_iterations_keeps_initial_classifier() {
        let (pool, labels) = toy_pool(30);
        let start = starting(&["savings bond", "bond rate", "savings rate"]);
        let config = SamplingConfig {
            iterations: 0,
            ..Default::default()
        };
        let initial = ActiveLoop::new(&pool, start.clone(), config.clone()).unwrap();
        let out = run_active_loop(&pool, &labels, start, config).unwrap();
        assert!(out.logs.is_empty());
        assert_eq!(out.classifier.snapshot_id(), initial.classifier().snapshot_id());
    }

    #[test]
    fn exhaustion_stops_cleanly() {
        let (pool, labels) = toy_pool(4);
        let config = SamplingConfig {
            iterations: 2,
            ..Default::default()
        };
        let out = run_active_loop(&pool, &labels, starting(&["savings bond"]), config).unwrap();
        assert_eq!(out.logs.len(), 1);
        assert_eq!(out.labeled.len(), 5);
    }

    #[test]
    fn growth_and_no_repeats() {
        let (pool, labels) = toy_pool(60);
        for strategy in Strategy::ALL {
            let config = SamplingConfig {
                iterations: 20,
                strategy,
                seed: 9,
                ..Default::default()
            };
            let out = run_active_loop(&pool, &labels, starting(&["savings bond", "bond rate"]), config).unwrap();
            let mut seen = HashSet::new();
            for (k, log) in out.logs.iter().enumerate() {
                assert_eq!(log.iteration, k + 1);
                assert_eq!(log.labeled_size, 2 + (4 * (k + 1)).min(60));
                for id in &log.selected {
                    assert!(seen.insert(id.clone()), "{id} selected twice");
                    assert_eq!(labels.get(id), Some(log.labels[log.selected.iter().position(|x| x == id).unwrap()]));
                }
            }
            assert_eq!(out.logs.len(), 15, "{strategy}");
        }
    }

    #[test]
    fn oracle_failure_preserves_partial_log() {
        let (pool, labels) = toy_pool(40);
        let calls = AtomicUsize::new(0);
        let flaky = |id: &str| {
            if calls.fetch_add(1, Ordering::Relaxed) >= 8 {
                Err(OracleError {
                    doc_id: id.to_owned(),
                    reason: "teacher left".into(),
                })
            } else {
                labels.label(id)
            }
        };
        let config = SamplingConfig {
            iterations: 10,
            ..Default::default()
        };
        let err = run_active_loop(&pool, &flaky, starting(&["savings bond"]), config).unwrap_err();
        assert_eq!(err.logs.len(), 2);
        assert!(matches!(err.error, SamplingError::Oracle(_)));
    }

    #[test]
    fn commit_rejects_labeled_or_unknown_documents() {
        let (pool, _) = toy_pool(10);
        let mut state = ActiveLoop::new(&pool, starting(&["savings bond"]), SamplingConfig::default()).unwrap();
        state.commit(&[0, 1], &[Label::Positive, Label::Negative]).unwrap();
        let before = state.classifier().snapshot_id();
        assert!(state.commit(&[1, 2], &[Label::Positive, Label::Negative]).is_err());
        assert!(state.commit(&[3, 3], &[Label::Positive, Label::Negative]).is_err());
        assert!(state.commit(&[99], &[Label::Positive]).is_err());
        assert_eq!(state.classifier().snapshot_id(), before);
        assert_eq!(state.labeled().len(), 3);
    }

    #[test]
    fn runs_are_reproducible() {
        let (pool, labels) = toy_pool(80);
        let config = SamplingConfig {
            iterations: 12,
            strategy: Strategy::Uncertainty,
            ..Default::default()
        };
        let a = run_active_loop(&pool, &labels, starting(&["savings bond"]), config.clone()).unwrap();
        let b = run_active_loop(&pool, &labels, starting(&["savings bond"]), config).unwrap();
        assert_eq!(a.logs, b.logs);
    }

    #[test]
    fn audited_oracle_counts_held_out_reads() {
        let (_, labels) = toy_pool(10);
        let held_out: HashSet<String> = ["d0003".to_string()].into();
        let audited = AuditedOracle::new(&labels, &held_out);
        audited.label("d0001").unwrap();
        audited.label("d0003").unwrap();
        assert!(audited.label("missing").is_err());
        assert_eq!(audited.reads(), 3);
        assert_eq!(audited.held_out_reads(), 1);
    }
}
