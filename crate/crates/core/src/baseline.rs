//! Nearest-neighbour message retrieval.
//!
//! A query diff is compared with every indexed training diff by cosine
//! similarity of bag-of-words count vectors. The `k` most similar diffs form a
//! shortlist, which is re-ranked by smoothed sentence BLEU-4 of the candidate
//! diff against the query diff; the winner's message is returned verbatim.

use std::collections::HashMap;

use thiserror::Error;

use crate::metrics::sentence_bleu_smoothed;
use crate::preprocess::ProcessedExample;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("no training example with a non-empty diff")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
}

/// Sparse token counts, sorted by token id.
#[derive(Debug, Clone, PartialEq)]
pub struct BowVector {
    pub counts: Vec<(usize, u32)>,
    pub norm: f64,
}

impl BowVector {
    fn from_counts(mut counts: Vec<(usize, u32)>) -> Self {
        counts.sort_unstable();
        let norm = counts
            .iter()
            .map(|&(_, c)| (c as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        BowVector { counts, norm }
    }
}

#[derive(Debug, Clone)]
pub struct BowIndex {
    vocab: HashMap<String, usize>,
    vectors: Vec<BowVector>,
    diffs: Vec<Vec<String>>,
    messages: Vec<Vec<String>>,
    fallback: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Position in the index.
    pub entry: usize,
    pub cosine: f64,
    pub bleu: f64,
}

pub fn build_index(train: &[ProcessedExample]) -> Result<BowIndex, BaselineError> {
    let mut vocab: HashMap<String, usize> = HashMap::new();
    let mut vectors = Vec::new();
    let mut diffs = Vec::new();
    let mut messages = Vec::new();
    for ex in train.iter().filter(|e| !e.source_tokens.is_empty()) {
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for t in &ex.source_tokens {
            let next = vocab.len();
            *counts
                .entry(*vocab.entry(t.clone()).or_insert(next))
                .or_insert(0) += 1;
        }
        vectors.push(BowVector::from_counts(counts.into_iter().collect()));
        diffs.push(ex.source_tokens.clone());
        messages.push(ex.target_tokens.clone());
    }
    if vectors.is_empty() {
        return Err(BaselineError::EmptyIndex);
    }
    // Most frequent message, earliest on ties.
    let mut freq: HashMap<&[String], (usize, usize)> = HashMap::new();
    for (i, m) in messages.iter().enumerate() {
        freq.entry(m.as_slice()).or_insert((0, i)).0 += 1;
    }
    let fallback = freq
        .values()
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|&(_, i)| i)
        .expect("index is non-empty");
    Ok(BowIndex {
        vocab,
        vectors,
        diffs,
        messages,
        fallback,
    })
}

impl BowIndex {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, entry: usize) -> &BowVector {
        &self.vectors[entry]
    }

    pub fn message(&self, entry: usize) -> &[String] {
        &self.messages[entry]
    }

    /// Token id in the index vocabulary.
    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.vocab.get(token).copied()
    }

    /// Count vector of a query. Unknown tokens add to the norm only.
    pub fn query_vector<S: AsRef<str>>(&self, tokens: &[S]) -> BowVector {
        let mut known: HashMap<usize, u32> = HashMap::new();
        let mut unknown: HashMap<&str, u32> = HashMap::new();
        for t in tokens {
            match self.vocab.get(t.as_ref()) {
                Some(&id) => *known.entry(id).or_insert(0) += 1,
                None => *unknown.entry(t.as_ref()).or_insert(0) += 1,
            }
        }
        let mut v = BowVector::from_counts(known.into_iter().collect());
        let extra: f64 = unknown.values().map(|&c| (c as f64).powi(2)).sum();
        v.norm = (v.norm.powi(2) + extra).sqrt();
        v
    }

    pub fn cosine(&self, query: &BowVector, entry: usize) -> f64 {
        let doc = &self.vectors[entry];
        if query.norm == 0.0 || doc.norm == 0.0 {
            return 0.0;
        }
        let (mut i, mut j, mut dot) = (0, 0, 0.0);
        while i < query.counts.len() && j < doc.counts.len() {
            let (a, b) = (query.counts[i], doc.counts[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += a.1 as f64 * b.1 as f64;
                    i += 1;
                    j += 1;
                }
            }
        }
        dot / (query.norm * doc.norm)
    }

    /// The `k` entries most cosine-similar to the query (clamped to the index
    /// size), best first, ties by lowest entry.
    pub fn shortlist<S: AsRef<str>>(&self, query: &[S], k: usize) -> Vec<(usize, f64)> {
        let q = self.query_vector(query);
        let mut scored: Vec<(usize, f64)> =
            (0..self.len()).map(|i| (i, self.cosine(&q, i))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k.min(self.len()));
        scored
    }

    /// Shortlist re-ranked by smoothed BLEU-4 of each candidate diff against
    /// the query, best first, ties by lowest entry.
    pub fn rank<S: AsRef<str>>(
        &self,
        query: &[S],
        k: usize,
    ) -> Result<Vec<Candidate>, BaselineError> {
        if k == 0 {
            return Err(BaselineError::InvalidK);
        }
        let mut out: Vec<Candidate> = self
            .shortlist(query, k)
            .into_iter()
            .map(|(entry, cosine)| Candidate {
                entry,
                cosine,
                bleu: sentence_bleu_smoothed(query, &self.diffs[entry]),
            })
            .collect();
        out.sort_by(|a, b| b.bleu.total_cmp(&a.bleu).then(a.entry.cmp(&b.entry)));
        Ok(out)
    }
}

/// Message of the best re-ranked neighbour. An empty query yields the most
/// frequent training message.
pub fn nngen_generate<'a, S: AsRef<str>>(
    index: &'a BowIndex,
    query: &[S],
    k: usize,
) -> Result<&'a [String], BaselineError> {
    if k == 0 {
        return Err(BaselineError::InvalidK);
    }
    if query.is_empty() {
        return Ok(index.message(index.fallback));
    }
    let best = index.rank(query, k)?[0];
    Ok(index.message(best.entry))
}
