//! JSON export of a trained classifier.
//!
//! The document carries every candidate feature with its counts and log
//! ratio, so a reload reproduces the classifier exactly: the ratios are
//! recomputed from the counts on load and must match the stored values bit
//! for bit.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ratios::{FeatureCounts, FeatureSet, LikelihoodTable};
use super::{Classifier, ClassifierError, LogisticParams, LossMatrix};
use crate::corpus::Label;

pub const EXPORT_FORMAT: &str = "activelabel-classifier/1";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("malformed classifier document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported classifier format {0:?}")]
    Format(String),
    #[error("inconsistent classifier document: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub feature: String,
    pub positive_count: u64,
    pub negative_count: u64,
    pub log_ratio: f64,
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierDocument {
    pub format: String,
    pub selection_fraction: f64,
    pub logistic: LogisticParams,
    pub loss: LossMatrix,
    pub positive_tokens: u64,
    pub negative_tokens: u64,
    pub distinct_features: usize,
    pub required: Vec<String>,
    pub features: Vec<FeatureRecord>,
}

impl ClassifierDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classifier document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ExportError> {
        Ok(serde_json::from_str(text)?)
    }
}

impl Classifier {
    pub fn to_document(&self) -> ClassifierDocument {
        let counts = self.table.counts();
        let features = counts
            .iter()
            .map(|(feature, c)| FeatureRecord {
                feature: feature.to_owned(),
                positive_count: c.positive,
                negative_count: c.negative,
                log_ratio: self.table.log_ratio(feature).unwrap_or(0.0),
                selected: self.feature_set.contains(feature),
            })
            .collect();
        ClassifierDocument {
            format: EXPORT_FORMAT.to_owned(),
            selection_fraction: self.feature_set.selection_fraction,
            logistic: self.logistic,
            loss: self.loss,
            positive_tokens: counts.positive_tokens(),
            negative_tokens: counts.negative_tokens(),
            distinct_features: counts.distinct(),
            required: self.feature_set.required.iter().cloned().collect(),
            features,
        }
    }

    pub fn export_json(&self) -> String {
        self.to_document().to_json()
    }

    /// Hex SHA-256 of the exported document; identifies a snapshot.
    pub fn snapshot_id(&self) -> String {
        hex::encode(Sha256::digest(self.export_json().as_bytes()))
    }

    pub fn from_document(doc: &ClassifierDocument) -> Result<Self, ExportError> {
        if doc.format != EXPORT_FORMAT {
            return Err(ExportError::Format(doc.format.clone()));
        }
        if !doc.logistic.is_finite() {
            return Err(ExportError::Inconsistent("non-finite logistic parameters".into()));
        }
        doc.loss.validate()?;
        if !(doc.selection_fraction > 0.0 && doc.selection_fraction <= 1.0) {
            return Err(ClassifierError::InvalidFraction(doc.selection_fraction).into());
        }

        let mut counts = FeatureCounts::default();
        let mut selected = BTreeSet::new();
        let mut previous: Option<&str> = None;
        for rec in &doc.features {
            if previous.is_some_and(|p| p >= rec.feature.as_str()) {
                return Err(ExportError::Inconsistent(format!(
                    "features not strictly sorted at {:?}",
                    rec.feature
                )));
            }
            previous = Some(&rec.feature);
            if rec.positive_count + rec.negative_count == 0 {
                return Err(ExportError::Inconsistent(format!(
                    "feature {:?} has no occurrences",
                    rec.feature
                )));
            }
            counts.add(&rec.feature, Label::Positive, rec.positive_count);
            counts.add(&rec.feature, Label::Negative, rec.negative_count);
            if rec.selected {
                selected.insert(rec.feature.clone());
            }
        }
        if counts.positive_tokens() != doc.positive_tokens
            || counts.negative_tokens() != doc.negative_tokens
            || counts.distinct() != doc.distinct_features
        {
            return Err(ExportError::Inconsistent(
                "token totals do not match the feature counts".into(),
            ));
        }

        let table = LikelihoodTable::from_counts(counts)?;
        for rec in &doc.features {
            let recomputed = table.log_ratio(&rec.feature).unwrap_or(f64::NAN);
            if recomputed.to_bits() != rec.log_ratio.to_bits() {
                return Err(ExportError::Inconsistent(format!(
                    "stored log ratio of {:?} does not match its counts",
                    rec.feature
                )));
            }
        }

        let required: BTreeSet<String> = doc.required.iter().cloned().collect();
        if !required.is_subset(&selected) {
            return Err(ExportError::Inconsistent(
                "required features must be selected".into(),
            ));
        }
        let feature_set = FeatureSet {
            selected,
            required,
            selection_fraction: doc.selection_fraction,
        };
        Ok(Classifier::assemble(feature_set, table, doc.logistic, doc.loss))
    }

    pub fn import_json(text: &str) -> Result<Self, ExportError> {
        Self::from_document(&ClassifierDocument::from_json(text)?)
    }
}
