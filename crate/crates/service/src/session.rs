//! A labeling session: the sampling loop with a person as the teacher.
//!
//! Every mutation is split into a check and an apply step so the caller
//! can persist the event in between; replaying the same events rebuilds
//! the same session.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use activelabel::classifier::LossMatrix;
use activelabel::corpus::{tokenize, Document, Label, LabelMap, LabeledExample};
use activelabel::evaluation::{evaluate_pool, EffectivenessReport};
use activelabel::sampling::{
    ActiveLoop, DocPool, Proposal, SamplingConfig, SamplingError, Strategy, DEFAULT_BATCH_SIZE,
};
use activelabel::classifier::DEFAULT_SELECTION_FRACTION;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Id of the pseudo-document built from seed words. Tabs cannot occur in
/// corpus ids, so it never collides with a real document.
const SEED_WORDS_ID: &str = "\tseed-words";
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("unknown corpus {0:?}")]
    UnknownCorpus(String),
    #[error("corpus {0:?} is empty")]
    EmptyCorpus(String),
    #[error("document {0:?} is not in the corpus")]
    UnknownDocument(String),
    #[error("a session needs at least one positive seed document or a seed word")]
    NoSeeds,
    #[error("{0}")]
    InvalidRequest(String),
    #[error("cannot {action} while the session is {status}")]
    Conflict { action: &'static str, status: SessionStatus },
    #[error("every document in the pool has been labeled")]
    Exhausted,
    #[error("labels must cover exactly the pending batch (missing {missing:?}, unexpected {unexpected:?})")]
    LabelMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("event log does not replay: {0}")]
    Replay(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("event log: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Idle,
    AwaitingLabels,
    Training,
    Exhausted,
}

impl std::fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SessionStatus::Idle => "idle",
            SessionStatus::AwaitingLabels => "awaiting_labels",
            SessionStatus::Training => "training",
            SessionStatus::Exhausted => "exhausted",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub batch_size: usize,
    pub selection_fraction: f64,
    pub loss: LossMatrix,
    pub strategy: Strategy,
    /// Only used by the random strategy.
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            selection_fraction: DEFAULT_SELECTION_FRACTION,
            loss: LossMatrix::min_error(),
            strategy: Strategy::Uncertainty,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            batch_size: self.batch_size,
            strategy: self.strategy,
            seed: self.seed,
            selection_fraction: self.selection_fraction,
            loss: self.loss,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedExample {
    pub doc_id: String,
    pub label: Label,
}

/// Body of a create request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub corpus: String,
    pub seeds: Vec<SeedExample>,
    pub seed_words: Vec<String>,
    pub config: SessionConfig,
    /// Held-out labeled documents. They are removed from the pool and used
    /// only to report effectiveness after each iteration.
    pub eval_labels: BTreeMap<String, Label>,
}

impl Default for CreateSession {
    fn default() -> Self {
        Self {
            corpus: "default".into(),
            seeds: Vec::new(),
            seed_words: Vec::new(),
            config: SessionConfig::default(),
            eval_labels: BTreeMap::new(),
        }
    }
}

/// A loaded corpus and its tokenized pool, shared by sessions.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub documents: Arc<Vec<Document>>,
    pub pool: Arc<DocPool>,
}

impl CorpusEntry {
    pub fn new(documents: Vec<Document>) -> Self {
        let pool = Arc::new(DocPool::from_documents(&documents));
        Self {
            documents: Arc::new(documents),
            pool,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub doc_id: String,
    pub title: String,
    pub posterior: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub labeled: usize,
    pub positives: usize,
    pub snapshot: String,
    pub effectiveness: Option<EffectivenessReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub iteration: usize,
    pub labeled: usize,
    pub positives: usize,
    pub remaining: usize,
    pub snapshot: String,
    pub status: SessionStatus,
    pub effectiveness: Option<EffectivenessReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Progress of a session. Counts only: no effectiveness is estimated from
/// the labeled sample, which is not a random sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub session_id: String,
    pub status: SessionStatus,
    pub iteration: usize,
    pub labeled: usize,
    pub positives: usize,
    pub remaining: usize,
    pub pending: usize,
    pub snapshot: String,
    pub initial_effectiveness: Option<EffectivenessReport>,
    pub history: Vec<HistoryEntry>,
    /// Posteriors of the unlabeled pool in equal-width bins over [0, 1].
    pub histogram: Vec<HistogramBin>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: SessionStatus,
    pub corpus: String,
    pub config: SessionConfig,
    pub iteration: usize,
    pub labeled: usize,
    pub positives: usize,
    pub remaining: usize,
    pub eval_size: usize,
    pub seed_words: Vec<String>,
    pub pending: Vec<BatchItem>,
}

/// One line of a session's event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        session_id: String,
        request: CreateSession,
    },
    BatchIssued {
        doc_ids: Vec<String>,
    },
    LabelsReceived {
        labels: BTreeMap<String, Label>,
    },
}

pub struct Session {
    id: String,
    request: CreateSession,
    state: ActiveLoop<Arc<DocPool>>,
    pseudo_seed: bool,
    eval: Option<(DocPool, LabelMap)>,
    initial_effectiveness: Option<EffectivenessReport>,
    status: SessionStatus,
    pending: Vec<Proposal>,
    history: Vec<HistoryEntry>,
}

impl Session {
    pub fn create(
        id: impl Into<String>,
        corpus: &CorpusEntry,
        request: CreateSession,
    ) -> Result<Self, SessionError> {
        if corpus.documents.is_empty() {
            return Err(SessionError::EmptyCorpus(request.corpus.clone()));
        }
        let sampling = request.config.sampling();
        sampling.validate()?;
        let full = &corpus.pool;

        let mut starting = Vec::new();
        let mut seen = HashSet::new();
        for seed in &request.seeds {
            let i = full
                .index_of(&seed.doc_id)
                .ok_or_else(|| SessionError::UnknownDocument(seed.doc_id.clone()))?;
            if !seen.insert(seed.doc_id.as_str()) {
                return Err(SessionError::InvalidRequest(format!(
                    "seed {:?} listed twice",
                    seed.doc_id
                )));
            }
            let doc = full.doc(i);
            starting.push(LabeledExample::new(doc.doc_id.clone(), doc.tokens.clone(), seed.label));
        }
        let word_tokens: Vec<String> = request.seed_words.iter().flat_map(|w| tokenize(w)).collect();
        let pseudo_seed = !word_tokens.is_empty();
        if pseudo_seed {
            starting.push(LabeledExample::new(SEED_WORDS_ID, word_tokens, Label::Positive));
        }
        if !starting.iter().any(|e| e.label.is_positive()) {
            return Err(SessionError::NoSeeds);
        }

        let mut eval_labels = LabelMap::new();
        for (doc_id, &label) in &request.eval_labels {
            if full.index_of(doc_id).is_none() {
                return Err(SessionError::UnknownDocument(doc_id.clone()));
            }
            if seen.contains(doc_id.as_str()) {
                return Err(SessionError::InvalidRequest(format!(
                    "{doc_id:?} cannot be both a seed and an evaluation document"
                )));
            }
            eval_labels.insert(doc_id.clone(), label);
        }
        let (pool, eval) = if eval_labels.is_empty() {
            (Arc::clone(full), None)
        } else {
            let (held, rest): (Vec<Document>, Vec<Document>) = corpus
                .documents
                .iter()
                .cloned()
                .partition(|d| eval_labels.contains(&d.doc_id));
            (
                Arc::new(DocPool::from_documents(&rest)),
                Some((DocPool::from_documents(&held), eval_labels)),
            )
        };

        let state = ActiveLoop::new(pool, starting, sampling)?;
        let mut session = Self {
            id: id.into(),
            request,
            state,
            pseudo_seed,
            eval,
            initial_effectiveness: None,
            status: SessionStatus::Idle,
            pending: Vec::new(),
            history: Vec::new(),
        };
        session.initial_effectiveness = session.effectiveness();
        if session.state.remaining() == 0 {
            session.status = SessionStatus::Exhausted;
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn request(&self) -> &CreateSession {
        &self.request
    }

    pub fn classifier(&self) -> &activelabel::classifier::Classifier {
        self.state.classifier()
    }

    /// Labeled documents, not counting the seed-word pseudo-document.
    pub fn labeled(&self) -> usize {
        self.state.labeled().len() - usize::from(self.pseudo_seed)
    }

    pub fn positives(&self) -> usize {
        self.state
            .labeled()
            .iter()
            .filter(|e| e.label.is_positive() && e.doc_id != SEED_WORDS_ID)
            .count()
    }

    fn effectiveness(&self) -> Option<EffectivenessReport> {
        self.eval.as_ref().map(|(pool, labels)| {
            let counts = evaluate_pool(self.state.classifier(), pool, labels);
            EffectivenessReport::from_counts(counts, 1.0).expect("beta 1 is valid")
        })
    }

    /// Chooses the next batch without changing anything.
    pub fn propose_batch(&self) -> Result<Vec<Proposal>, SessionError> {
        match self.status {
            SessionStatus::Idle => {}
            SessionStatus::Exhausted => return Err(SessionError::Exhausted),
            status => {
                return Err(SessionError::Conflict {
                    action: "request a batch",
                    status,
                })
            }
        }
        let batch = self.state.propose();
        if batch.is_empty() {
            return Err(SessionError::Exhausted);
        }
        Ok(batch)
    }

    /// Marks a proposed batch as pending.
    pub fn issue_batch(&mut self, batch: Vec<Proposal>) {
        debug_assert_eq!(self.status, SessionStatus::Idle);
        self.pending = batch;
        self.status = SessionStatus::AwaitingLabels;
    }

    pub fn next_batch(&mut self) -> Result<Vec<BatchItem>, SessionError> {
        let batch = self.propose_batch()?;
        self.issue_batch(batch);
        Ok(self.pending_items())
    }

    pub fn pending_items(&self) -> Vec<BatchItem> {
        self.pending
            .iter()
            .map(|p| BatchItem {
                doc_id: p.doc_id.clone(),
                title: self.state.pool().doc(p.index).title.clone(),
                posterior: p.posterior,
            })
            .collect()
    }

    pub fn pending_ids(&self) -> Vec<String> {
        self.pending.iter().map(|p| p.doc_id.clone()).collect()
    }

    /// Unlabeled documents outside the pending batch.
    pub fn remaining_after_pending(&self) -> usize {
        self.state.remaining() - self.pending.len()
    }

    pub fn check_labels(&self, labels: &BTreeMap<String, Label>) -> Result<(), SessionError> {
        if self.status != SessionStatus::AwaitingLabels {
            return Err(SessionError::Conflict {
                action: "accept labels",
                status: self.status,
            });
        }
        let pending: HashSet<&str> = self.pending.iter().map(|p| p.doc_id.as_str()).collect();
        let mut missing: Vec<String> = self
            .pending
            .iter()
            .filter(|p| !labels.contains_key(&p.doc_id))
            .map(|p| p.doc_id.clone())
            .collect();
        missing.sort();
        let unexpected: Vec<String> = labels
            .keys()
            .filter(|k| !pending.contains(k.as_str()))
            .cloned()
            .collect();
        if missing.is_empty() && unexpected.is_empty() {
            Ok(())
        } else {
            Err(SessionError::LabelMismatch { missing, unexpected })
        }
    }

    /// Records labels for the whole pending batch and retrains. Nothing
    /// changes if the labels are rejected.
    pub fn apply_labels(&mut self, labels: &BTreeMap<String, Label>) -> Result<TrainingSummary, SessionError> {
        self.check_labels(labels)?;
        let indices: Vec<usize> = self.pending.iter().map(|p| p.index).collect();
        let ordered: Vec<Label> = self.pending.iter().map(|p| labels[&p.doc_id]).collect();
        self.state.commit(&indices, &ordered)?;
        self.pending.clear();
        self.status = if self.state.remaining() == 0 {
            SessionStatus::Exhausted
        } else {
            SessionStatus::Idle
        };
        let effectiveness = self.effectiveness();
        let snapshot = self.state.classifier().snapshot_id();
        self.history.push(HistoryEntry {
            iteration: self.state.iteration(),
            labeled: self.labeled(),
            positives: self.positives(),
            snapshot: snapshot.clone(),
            effectiveness,
        });
        Ok(TrainingSummary {
            iteration: self.state.iteration(),
            labeled: self.labeled(),
            positives: self.positives(),
            remaining: self.state.remaining(),
            snapshot,
            status: self.status,
            effectiveness,
        })
    }

    pub fn metrics(&self) -> MetricsReport {
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for p in self.state.pool_posteriors() {
            let bin = ((p * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        let histogram = counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| HistogramBin {
                lower: i as f64 / HISTOGRAM_BINS as f64,
                upper: (i + 1) as f64 / HISTOGRAM_BINS as f64,
                count,
            })
            .collect();
        MetricsReport {
            session_id: self.id.clone(),
            status: self.status,
            iteration: self.state.iteration(),
            labeled: self.labeled(),
            positives: self.positives(),
            remaining: self.state.remaining(),
            pending: self.pending.len(),
            snapshot: self.state.classifier().snapshot_id(),
            initial_effectiveness: self.initial_effectiveness,
            history: self.history.clone(),
            histogram,
        }
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            status: self.status,
            corpus: self.request.corpus.clone(),
            config: self.request.config.clone(),
            iteration: self.state.iteration(),
            labeled: self.labeled(),
            positives: self.positives(),
            remaining: self.state.remaining(),
            eval_size: self.eval.as_ref().map_or(0, |(p, _)| p.len()),
            seed_words: self.request.seed_words.clone(),
            pending: self.pending_items(),
        }
    }

    pub fn export(&self) -> String {
        self.state.classifier().export_json()
    }

    /// Rebuilds a session from its event log.
    pub fn replay(events: &[SessionEvent], corpora: &HashMap<String, CorpusEntry>) -> Result<Self, SessionError> {
        let Some(SessionEvent::Created { session_id, request }) = events.first() else {
            return Err(SessionError::Replay("log does not start with a created event".into()));
        };
        let corpus = corpora
            .get(&request.corpus)
            .ok_or_else(|| SessionError::UnknownCorpus(request.corpus.clone()))?;
        let mut session = Session::create(session_id.clone(), corpus, request.clone())?;
        for event in &events[1..] {
            match event {
                SessionEvent::Created { .. } => {
                    return Err(SessionError::Replay("second created event".into()));
                }
                SessionEvent::BatchIssued { doc_ids } => {
                    let batch = session.propose_batch()?;
                    let ids: Vec<&str> = batch.iter().map(|p| p.doc_id.as_str()).collect();
                    if ids != doc_ids.iter().map(String::as_str).collect::<Vec<_>>() {
                        return Err(SessionError::Replay(format!(
                            "batch {doc_ids:?} was logged but {ids:?} is proposed"
                        )));
                    }
                    session.issue_batch(batch);
                }
                SessionEvent::LabelsReceived { labels } => {
                    session.apply_labels(labels)?;
                }
            }
        }
        Ok(session)
    }
}
