//! Token ↔ index vocabularies with fixed special tokens.

use std::collections::HashMap;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::ProcessedExample;

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const SPECIALS: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<unk>"];

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("token id {id} out of range for vocabulary of size {size}")]
    Range { id: usize, size: usize },
    #[error("min_freq must be at least 1")]
    MinFreq,
    #[error("malformed vocabulary file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Which half of a parallel example a vocabulary covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    specials: Vec<String>,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Vocabulary holding `tokens` after the four specials. Duplicates and
    /// tokens spelled like a special are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIALS {
            v.push(s.to_string());
        }
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Maps tokens to ids, unknown tokens to `UNK`. With `add_markers` the
    /// result is wrapped in `SOS … EOS`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], add_markers: bool) -> Vec<usize> {
        let mut out = Vec::with_capacity(tokens.len() + 2);
        if add_markers {
            out.push(SOS);
        }
        out.extend(tokens.iter().map(|t| self.id(t.as_ref()).unwrap_or(UNK)));
        if add_markers {
            out.push(EOS);
        }
        out
    }

    /// Inverse of [`encode`](Self::encode). Padding and sequence markers are
    /// dropped; `UNK` is rendered as `<unk>`.
    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>, VocabError> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            if id >= self.len() {
                return Err(VocabError::Range {
                    id,
                    size: self.len(),
                });
            }
            if matches!(id, PAD | SOS | EOS) {
                continue;
            }
            out.push(self.tokens[id].clone());
        }
        Ok(out)
    }

    /// 64-bit FNV-1a over every token (specials included), each followed by `\n`.
    pub fn fingerprint(&self) -> u64 {
        let mut h = FnvHasher::default();
        for t in &self.tokens {
            h.write(t.as_bytes());
            h.write(b"\n");
        }
        h.finish()
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            specials: SPECIALS.iter().map(|s| s.to_string()).collect(),
            tokens: self.tokens[SPECIALS.len()..].to_vec(),
        };
        serde_json::to_string(&file).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, VocabError> {
        let file: VocabFile = serde_json::from_str(text)?;
        if file.specials != SPECIALS {
            return Err(VocabError::Format(format!(
                "unexpected specials {:?}",
                file.specials
            )));
        }
        let v = Vocabulary::from_tokens(file.tokens.iter().cloned());
        if v.len() != file.tokens.len() + SPECIALS.len() {
            return Err(VocabError::Format("duplicate tokens".into()));
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Counts tokens on one side of `examples` and keeps those seen at least
/// `min_freq` times, most frequent first, ties in lexicographic order.
/// `max_size` bounds the total size including the specials.
pub fn build_vocab(
    examples: &[ProcessedExample],
    side: Side,
    min_freq: usize,
    max_size: Option<usize>,
) -> Result<Vocabulary, VocabError> {
    let seqs = examples.iter().map(|e| match side {
        Side::Source => e.source_tokens.as_slice(),
        Side::Target => e.target_tokens.as_slice(),
    });
    build_vocab_from(seqs, min_freq, max_size)
}

pub fn build_vocab_from<'s, I>(
    seqs: I,
    min_freq: usize,
    max_size: Option<usize>,
) -> Result<Vocabulary, VocabError>
where
    I: IntoIterator<Item = &'s [String]>,
{
    if min_freq == 0 {
        return Err(VocabError::MinFreq);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for seq in seqs {
        for t in seq {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq && !SPECIALS.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if let Some(max) = max_size {
        ranked.truncate(max.saturating_sub(SPECIALS.len()));
    }
    Ok(Vocabulary::from_tokens(
        ranked.into_iter().map(|(t, _)| t.to_string()),
    ))
}
