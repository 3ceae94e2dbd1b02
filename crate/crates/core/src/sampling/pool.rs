use std::collections::HashMap;

use rayon::prelude::*;

use crate::classifier::Classifier;
use crate::corpus::{tokenize, Document};

/// Pools at least this large are scored on the rayon pool.
const PARALLEL_SCORING_THRESHOLD: usize = 4096;

#[derive(Clone, Debug)]
pub struct PoolDoc {
    pub doc_id: String,
    pub title: String,
    pub tokens: Vec<String>,
    token_ids: Vec<u32>,
}

impl PoolDoc {
    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }
}

/// Tokenized documents sorted by doc_id, with tokens interned so a pool can
/// be scored with array lookups instead of string hashing.
///
/// Because documents are kept in doc_id order, comparing pool indices is the
/// same as comparing doc ids; the selection rules rely on that for their tie
/// breaking.
#[derive(Clone, Debug, Default)]
pub struct DocPool {
    docs: Vec<PoolDoc>,
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl DocPool {
    pub fn from_documents(docs: &[Document]) -> Self {
        let mut sorted: Vec<&Document> = docs.iter().collect();
        sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        sorted.dedup_by(|a, b| a.doc_id == b.doc_id);

        let mut ids: HashMap<String, u32> = HashMap::new();
        let mut words = Vec::new();
        let mut pool_docs = Vec::with_capacity(sorted.len());
        for doc in sorted {
            let tokens = tokenize(&doc.title);
            let token_ids = tokens
                .iter()
                .map(|t| {
                    *ids.entry(t.clone()).or_insert_with(|| {
                        words.push(t.clone());
                        (words.len() - 1) as u32
                    })
                })
                .collect();
            pool_docs.push(PoolDoc {
                doc_id: doc.doc_id.clone(),
                title: doc.title.clone(),
                tokens,
                token_ids,
            });
        }
        let index = pool_docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i))
            .collect();
        Self {
            docs: pool_docs,
            words,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, index: usize) -> &PoolDoc {
        &self.docs[index]
    }

    pub fn docs(&self) -> &[PoolDoc] {
        &self.docs
    }

    pub fn index_of(&self, doc_id: &str) -> Option<usize> {
        self.index.get(doc_id).copied()
    }

    /// Distinct tokens, indexed by token id.
    pub fn vocabulary(&self) -> &[String] {
        &self.words
    }

    /// Posteriors of the documents at `indices`, in the same order. Large
    /// batches are scored in parallel; the result does not depend on it.
    pub fn posteriors(&self, classifier: &Classifier, indices: &[usize]) -> Vec<f64> {
        let weights = classifier.dense_weights(&self.words);
        let score = |&i: &usize| {
            let mut s = 0.0;
            for &t in &self.docs[i].token_ids {
                s += weights[t as usize];
            }
            classifier.posterior_from_score(s)
        };
        if indices.len() >= PARALLEL_SCORING_THRESHOLD {
            indices.par_iter().map(score).collect()
        } else {
            indices.iter().map(score).collect()
        }
    }

    pub fn all_posteriors(&self, classifier: &Classifier) -> Vec<f64> {
        let all: Vec<usize> = (0..self.docs.len()).collect();
        self.posteriors(classifier, &all)
    }
}
