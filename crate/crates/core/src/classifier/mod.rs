//! The probabilistic text classifier.
//!
//! Training estimates a smoothed log likelihood ratio per token, keeps the
//! highest-quality features, scores each training example by summing the
//! ratios of its tokens, and calibrates that score into a posterior with a
//! single-predictor logistic fit. Decisions compare expected losses under a
//! [`LossMatrix`].

mod export;
mod logistic;
mod ratios;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, LabeledExample};

pub use export::{ClassifierDocument, ExportError, FeatureRecord, EXPORT_FORMAT};
pub use logistic::{
    fit_logistic, fit_logistic_detailed, sigmoid, LogisticFit, LogisticObjective, LogisticParams,
    MAX_NEWTON_ITERATIONS, RIDGE_PENALTY, STEP_TOLERANCE,
};
pub use ratios::{
    estimate_ratios, feature_quality, likelihood_ratio, log_likelihood_ratio, select_features,
    FeatureCounts, FeatureSet, LikelihoodTable, TokenCounts, DEFAULT_SELECTION_FRACTION,
};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains no tokens")]
    NoTokens,
    #[error("selection fraction {0} must lie in (0, 1]")]
    InvalidFraction(f64),
    #[error("required feature {0:?} does not occur in the training set")]
    UnknownRequiredFeature(String),
    #[error("non-finite document score {0}")]
    NonFiniteScore(f64),
    #[error("invalid loss matrix: {0}")]
    InvalidLoss(String),
}

/// `lij` is the loss for deciding class i when the truth is class j, with 1
/// the category and 2 its complement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    pub l11: f64,
    pub l12: f64,
    pub l21: f64,
    pub l22: f64,
}

impl LossMatrix {
    pub fn new(l11: f64, l12: f64, l21: f64, l22: f64) -> Result<Self, ClassifierError> {
        let m = Self { l11, l12, l21, l22 };
        m.validate()?;
        Ok(m)
    }

    /// Zero-one loss: both kinds of error cost 1.
    pub fn min_error() -> Self {
        Self {
            l11: 0.0,
            l12: 1.0,
            l21: 1.0,
            l22: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let all = [self.l11, self.l12, self.l21, self.l22];
        if all.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(ClassifierError::InvalidLoss(
                "losses must be finite and non-negative".into(),
            ));
        }
        if self.l21 < self.l11 || self.l12 < self.l22 {
            return Err(ClassifierError::InvalidLoss(
                "a wrong decision may not cost less than the right one".into(),
            ));
        }
        Ok(())
    }
}

impl Default for LossMatrix {
    fn default() -> Self {
        Self::min_error()
    }
}

/// Assigns the category when the expected loss of rejecting it exceeds the
/// expected loss of accepting it. Equality rejects.
pub fn decide(p: f64, loss: &LossMatrix) -> Label {
    let reject = loss.l21 * p + loss.l22 * (1.0 - p);
    let accept = loss.l11 * p + loss.l12 * (1.0 - p);
    Label::from_bool(reject > accept)
}

/// A trained classifier. Immutable once built.
#[derive(Clone, Debug)]
pub struct Classifier {
    feature_set: FeatureSet,
    table: LikelihoodTable,
    logistic: LogisticParams,
    loss: LossMatrix,
    weights: HashMap<String, f64>,
}

impl Classifier {
    fn assemble(
        feature_set: FeatureSet,
        table: LikelihoodTable,
        logistic: LogisticParams,
        loss: LossMatrix,
    ) -> Self {
        let weights = feature_set
            .selected
            .iter()
            .map(|f| (f.clone(), table.log_ratio(f).expect("selected feature has a ratio")))
            .collect();
        Self {
            feature_set,
            table,
            logistic,
            loss,
            weights,
        }
    }

    pub fn feature_set(&self) -> &FeatureSet {
        &self.feature_set
    }

    pub fn table(&self) -> &LikelihoodTable {
        &self.table
    }

    pub fn logistic(&self) -> LogisticParams {
        self.logistic
    }

    pub fn loss(&self) -> &LossMatrix {
        &self.loss
    }

    /// Log ratio of a selected feature, or `None` if the feature is not used.
    pub fn weight(&self, feature: &str) -> Option<f64> {
        self.weights.get(feature).copied()
    }

    /// Sum of the log ratios of every token occurrence that is a selected
    /// feature. Other tokens contribute nothing.
    pub fn score<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let mut total = 0.0;
        for t in tokens {
            if let Some(w) = self.weights.get(t.as_ref()) {
                total += w;
            }
        }
        total
    }

    pub fn posterior_from_score(&self, score: f64) -> f64 {
        self.logistic.probability(score)
    }

    /// Calibrated estimate of P(C | tokens).
    pub fn posterior<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        self.posterior_from_score(self.score(tokens))
    }

    pub fn classify<S: AsRef<str>>(&self, tokens: &[S]) -> Label {
        decide(self.posterior(tokens), &self.loss)
    }

    /// Dense weight vector for a token vocabulary: entry i is the log ratio of
    /// `words[i]` if it is a selected feature, otherwise zero.
    pub fn dense_weights<S: AsRef<str>>(&self, words: &[S]) -> Vec<f64> {
        words
            .iter()
            .map(|w| self.weights.get(w.as_ref()).copied().unwrap_or(0.0))
            .collect()
    }
}

/// Trains a classifier from scratch on `labeled`.
///
/// `required` features are kept regardless of quality and must occur in the
/// labeled set. With a single class present the logistic stage falls back to
/// the identity calibration.
pub fn train(
    labeled: &[LabeledExample],
    required: &BTreeSet<String>,
    fraction: f64,
    loss: LossMatrix,
) -> Result<Classifier, ClassifierError> {
    loss.validate()?;
    let table = estimate_ratios(labeled)?;
    let feature_set = select_features(&table, required, fraction)?;
    let provisional = Classifier::assemble(feature_set, table, LogisticParams::IDENTITY, loss);
    let points: Vec<(f64, Label)> = labeled
        .iter()
        .map(|e| (provisional.score(&e.tokens), e.label))
        .collect();
    let logistic = fit_logistic(&points)?;
    Ok(Classifier {
        logistic,
        ..provisional
    })
}
