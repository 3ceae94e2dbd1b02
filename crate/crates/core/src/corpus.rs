//! Title corpora: tokenization, TSV ingestion, keyword categories and
//! deterministic train/test splits.
//!
//! The corpus file is UTF-8 with one document per line and exactly three
//! tab-separated columns: `doc_id<TAB>keyword<TAB>title`. The keyword may be
//! empty. Categories are defined by case-insensitive substring matches against
//! the keyword column, and the resulting label map is the teacher used by the
//! simulated experiments.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: duplicate doc_id {doc_id:?}")]
    DuplicateDocId { line: usize, doc_id: String },
    #[error("line {line}: invalid category spec: {message}")]
    CategorySpec { line: usize, message: String },
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    DegenerateFraction(f64),
    #[error("split of {size} documents at fraction {fraction} leaves one side empty")]
    DegenerateSplit { size: usize, fraction: f64 },
    #[error("cannot split an empty corpus")]
    EmptyCorpus,
}

/// Binary class membership. `Positive` is the category C, `Negative` its
/// complement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Positive => f.write_str("positive"),
            Label::Negative => f.write_str("negative"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub keyword: String,
    pub title: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, keyword: impl Into<String>, title: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            keyword: keyword.into(),
            title: title.into(),
        }
    }

    pub fn tokenized(&self) -> TokenizedDoc {
        TokenizedDoc {
            doc_id: self.doc_id.clone(),
            tokens: tokenize(&self.title),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

/// A document together with the label the teacher gave it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(doc_id: impl Into<String>, tokens: Vec<String>, label: Label) -> Self {
        Self {
            doc_id: doc_id.into(),
            tokens,
            label,
        }
    }
}

/// Lowercases, deletes every character that is neither alphanumeric nor
/// whitespace, then splits on whitespace runs.
///
/// Punctuation is removed rather than replaced, so `"S&L"` becomes `"sl"`.
/// Digits are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// A malformed corpus line that was skipped during loading.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    docs: Vec<Document>,
}

impl Corpus {
    /// Builds a corpus from documents, rejecting duplicate ids.
    pub fn from_documents(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDocId {
                    line: i + 1,
                    doc_id: doc.doc_id.clone(),
                });
            }
        }
        Ok(Self { docs })
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.docs
    }
}

/// Result of [`load_corpus`]: the documents that parsed plus the lines that
/// did not.
#[derive(Clone, Debug)]
pub struct LoadReport {
    pub corpus: Corpus,
    pub skipped: Vec<LineIssue>,
    /// Number of non-empty lines seen.
    pub lines_read: usize,
}

/// Reads a corpus in the three-column TSV format.
///
/// Empty lines are ignored. Lines with the wrong number of columns, an empty
/// doc_id or an empty title are skipped and reported. A repeated doc_id is a
/// hard error.
pub fn load_corpus<R: BufRead>(reader: R) -> Result<LoadReport, CorpusError> {
    let mut docs = Vec::new();
    let mut skipped = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut lines_read = 0;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        lines_read += 1;

        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 3 {
            skipped.push(LineIssue {
                line: line_no,
                message: format!("expected 3 tab-separated columns, found {}", columns.len()),
            });
            continue;
        }
        let (doc_id, keyword, title) = (columns[0], columns[1], columns[2]);
        if doc_id.is_empty() {
            skipped.push(LineIssue {
                line: line_no,
                message: "empty doc_id".into(),
            });
            continue;
        }
        if title.trim().is_empty() {
            skipped.push(LineIssue {
                line: line_no,
                message: "empty title".into(),
            });
            continue;
        }
        if !seen.insert(doc_id.to_owned()) {
            return Err(CorpusError::DuplicateDocId {
                line: line_no,
                doc_id: doc_id.to_owned(),
            });
        }
        docs.push(Document::new(doc_id, keyword, title));
    }

    Ok(LoadReport {
        corpus: Corpus { docs },
        skipped,
        lines_read,
    })
}

/// Writes documents in the corpus TSV format.
pub fn write_corpus<W: Write>(mut writer: W, docs: &[Document]) -> std::io::Result<()> {
    for doc in docs {
        writeln!(writer, "{}\t{}\t{}", doc.doc_id, doc.keyword, doc.title)?;
    }
    writer.flush()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub substrings: Vec<String>,
}

impl CategorySpec {
    pub fn new(name: impl Into<String>, substrings: Vec<String>) -> Result<Self, CorpusError> {
        let spec = Self {
            name: name.into(),
            substrings,
        };
        spec.validate(0)?;
        Ok(spec)
    }

    fn validate(&self, line: usize) -> Result<(), CorpusError> {
        if self.name.trim().is_empty() {
            return Err(CorpusError::CategorySpec {
                line,
                message: "empty category name".into(),
            });
        }
        if self.substrings.is_empty() || self.substrings.iter().any(|s| s.is_empty()) {
            return Err(CorpusError::CategorySpec {
                line,
                message: format!("category {:?} needs at least one non-empty substring", self.name),
            });
        }
        Ok(())
    }

    /// Case-insensitive containment of any substring in `keyword`.
    pub fn matches(&self, keyword: &str) -> bool {
        let keyword = keyword.to_lowercase();
        self.substrings
            .iter()
            .any(|s| keyword.contains(&s.to_lowercase()))
    }
}

/// Reads one JSON object per line: `{"name": "...", "substrings": ["..."]}`.
pub fn load_category_specs<R: BufRead>(reader: R) -> Result<Vec<CategorySpec>, CorpusError> {
    let mut specs: Vec<CategorySpec> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let spec: CategorySpec =
            serde_json::from_str(&line).map_err(|e| CorpusError::CategorySpec {
                line: line_no,
                message: e.to_string(),
            })?;
        spec.validate(line_no)?;
        if specs.iter().any(|s| s.name == spec.name) {
            return Err(CorpusError::CategorySpec {
                line: line_no,
                message: format!("duplicate category {:?}", spec.name),
            });
        }
        specs.push(spec);
    }
    Ok(specs)
}

pub fn write_category_specs<W: Write>(mut writer: W, specs: &[CategorySpec]) -> std::io::Result<()> {
    for spec in specs {
        let line = serde_json::to_string(spec).map_err(std::io::Error::other)?;
        writeln!(writer, "{line}")?;
    }
    writer.flush()
}

/// Ground-truth labels keyed by doc_id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelMap {
    labels: HashMap<String, Label>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, doc_id: &str) -> Option<Label> {
        self.labels.get(doc_id).copied()
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, label: Label) -> Option<Label> {
        self.labels.insert(doc_id.into(), label)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.labels.contains_key(doc_id)
    }

    pub fn positives(&self) -> usize {
        self.labels.values().filter(|l| l.is_positive()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Label)> {
        self.labels.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// The sub-map for the given doc ids; ids without a label are left out.
    pub fn restricted_to<'a>(&self, doc_ids: impl IntoIterator<Item = &'a str>) -> LabelMap {
        let labels = doc_ids
            .into_iter()
            .filter_map(|id| self.labels.get(id).map(|l| (id.to_owned(), *l)))
            .collect();
        LabelMap { labels }
    }
}

impl FromIterator<(String, Label)> for LabelMap {
    fn from_iter<T: IntoIterator<Item = (String, Label)>>(iter: T) -> Self {
        Self {
            labels: iter.into_iter().collect(),
        }
    }
}

/// Labels every document: positive iff the category matches its keyword.
pub fn assign_labels(docs: &[Document], spec: &CategorySpec) -> LabelMap {
    docs.iter()
        .map(|d| (d.doc_id.clone(), Label::from_bool(spec.matches(&d.keyword))))
        .collect()
}

/// Number of test documents a split of `size` at `test_fraction` produces.
pub fn test_split_size(size: usize, test_fraction: f64) -> usize {
    (size as f64 * test_fraction).round() as usize
}

/// Random train/test partition, deterministic in `seed`.
///
/// Both halves keep the input order of their documents.
pub fn split(
    docs: &[Document],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Document>, Vec<Document>), CorpusError> {
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::DegenerateFraction(test_fraction));
    }
    let n_test = test_split_size(docs.len(), test_fraction);
    if n_test == 0 || n_test == docs.len() {
        return Err(CorpusError::DegenerateSplit {
            size: docs.len(),
            fraction: test_fraction,
        });
    }

    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_test = vec![false; docs.len()];
    for &i in &order[..n_test] {
        in_test[i] = true;
    }

    let mut train = Vec::with_capacity(docs.len() - n_test);
    let mut test = Vec::with_capacity(n_test);
    for (doc, is_test) in docs.iter().zip(in_test) {
        if is_test {
            test.push(doc.clone());
        } else {
            train.push(doc.clone());
        }
    }
    Ok((train, test))
}
