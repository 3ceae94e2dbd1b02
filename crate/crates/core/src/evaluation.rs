//! Effectiveness measures: confusion counts, recall, precision, F, and
//! mean/SD aggregation over repeated runs.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{decide, Classifier};
use crate::corpus::{Label, LabelMap};
use crate::sampling::DocPool;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("decisions and truth disagree on document {0:?}")]
    KeyMismatch(String),
    #[error("decisions cover {decisions} documents but truth covers {truth}")]
    SizeMismatch { decisions: usize, truth: usize },
    #[error("cannot aggregate zero runs")]
    NoRuns,
    #[error("beta must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("results csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, decision: Label, truth: Label) {
        match (decision, truth) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Positive, Label::Negative) => self.fp += 1,
            (Label::Negative, Label::Positive) => self.fn_ += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
        }
    }
}

/// Tallies decisions against true labels. Both maps must cover exactly the
/// same documents.
pub fn confusion(
    decisions: &HashMap<String, Label>,
    truth: &HashMap<String, Label>,
) -> Result<ConfusionCounts, EvaluationError> {
    if decisions.len() != truth.len() {
        return Err(EvaluationError::SizeMismatch {
            decisions: decisions.len(),
            truth: truth.len(),
        });
    }
    let mut counts = ConfusionCounts::default();
    for (id, &d) in decisions {
        let &t = truth
            .get(id)
            .ok_or_else(|| EvaluationError::KeyMismatch(id.clone()))?;
        counts.record(d, t);
    }
    Ok(counts)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// tp / (tp + fn), or 0 when the test set has no positives.
pub fn recall(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

/// tp / (tp + fp), or 0 when nothing was assigned to the category.
pub fn precision(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

/// (β²+1)PR / (β²P + R), with F = 0 when the denominator vanishes.
pub fn f_measure(recall: f64, precision: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (b2 + 1.0) * precision * recall / den
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessReport {
    pub recall: f64,
    pub precision: f64,
    pub f_beta: f64,
    pub beta: f64,
    pub counts: ConfusionCounts,
}

impl EffectivenessReport {
    pub fn from_counts(counts: ConfusionCounts, beta: f64) -> Result<Self, EvaluationError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(EvaluationError::InvalidBeta(beta));
        }
        let r = recall(&counts);
        let p = precision(&counts);
        Ok(Self {
            recall: r,
            precision: p,
            f_beta: f_measure(r, p, beta),
            beta,
            counts,
        })
    }
}

/// Classifies every pool document that has a label in `truth` and counts
/// the outcomes. Documents without a label are ignored.
pub fn evaluate_pool(classifier: &Classifier, pool: &DocPool, truth: &LabelMap) -> ConfusionCounts {
    let indices: Vec<usize> = (0..pool.len())
        .filter(|&i| truth.contains(&pool.doc(i).doc_id))
        .collect();
    let posteriors = pool.posteriors(classifier, &indices);
    let mut counts = ConfusionCounts::default();
    for (&i, p) in indices.iter().zip(posteriors) {
        let t = truth.get(&pool.doc(i).doc_id).expect("filtered on label");
        counts.record(decide(p, classifier.loss()), t);
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunAggregate {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single run.
    pub sd: f64,
    pub runs: usize,
    /// Set when there was only one run, so `sd` carries no information.
    pub single_run: bool,
}

pub fn aggregate_runs(values: &[f64]) -> Result<RunAggregate, EvaluationError> {
    let n = values.len();
    if n == 0 {
        return Err(EvaluationError::NoRuns);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n == 1 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    Ok(RunAggregate {
        mean,
        sd,
        runs: n,
        single_run: n == 1,
    })
}

/// Iterations at which a run is evaluated: 0 through 10, every fifth after
/// that, and always the last one.
pub fn evaluation_schedule(iterations: usize) -> BTreeSet<usize> {
    let mut s: BTreeSet<usize> = (0..=iterations.min(10)).collect();
    s.extend((15..=iterations).step_by(5));
    s.insert(iterations);
    s
}

pub const RESULTS_HEADER: &str =
    "category,strategy,run,labeled_count,iteration,tp,fp,fn,tn,recall,precision,f1";

/// One evaluated snapshot in the results CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub category: String,
    pub strategy: String,
    pub run: usize,
    pub labeled_count: usize,
    pub iteration: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl ResultRow {
    pub fn new(
        category: impl Into<String>,
        strategy: impl Into<String>,
        run: usize,
        labeled_count: usize,
        iteration: usize,
        counts: ConfusionCounts,
    ) -> Self {
        let r = recall(&counts);
        let p = precision(&counts);
        Self {
            category: category.into(),
            strategy: strategy.into(),
            run,
            labeled_count,
            iteration,
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            tn: counts.tn,
            recall: r,
            precision: p,
            f1: f_measure(r, p, 1.0),
        }
    }

    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
        }
    }
}

/// Writes rows with the header; pass `header = false` to append to an
/// existing file.
pub fn write_results<W: Write>(writer: W, rows: &[ResultRow], header: bool) -> Result<(), EvaluationError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    if header {
        w.write_record(RESULTS_HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<ResultRow>, EvaluationError> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(EvaluationError::Csv(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected header {:?}", header.join(",")),
        ))));
    }
    r.deserialize().map(|row| row.map_err(EvaluationError::from)).collect()
}
