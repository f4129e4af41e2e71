//! Turning raw commits into parallel token sequences.
//!
//! Two regimes are available. `Reference` tokenizes the first sentence of the
//! message and the raw diff text on whitespace and punctuation, removing only
//! issue and commit ids. `Rigorous` cleans the message (labels, references,
//! versions, camelCase, non-ASCII), parses the diff per file, keeps only
//! whitelisted files and emits filename, hunk context and changed lines with
//! operator-preserving sub-token splitting.

mod diff;
mod message;
mod tagger;

pub use diff::{
    clean_and_tokenize_diff, parse_diff, parse_diff_lenient, tokenize_code, DiffParseError,
    FileDiff,
};
pub use message::{
    clean_message, first_sentence, split_subtokens, tokenize_message, VERSION_TOKEN,
};
pub use tagger::{LexiconError, PosLexicon, Tag};

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RawCommit;

/// Number of most frequent leading verbs kept by the reference regime.
pub const TOP_VERBS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Reference,
    Rigorous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerbFilter {
    /// First token must be one of the most frequent leading verbs of the
    /// fitted corpus. Falls back to `StartsWithVerb` when unfitted.
    VdoApprox,
    StartsWithVerb,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub max_msg_tokens: usize,
    /// Only applied in rigorous mode; reference mode requires one token.
    pub min_msg_tokens: usize,
    pub max_diff_tokens: usize,
    /// Lowercase extensions without the dot. Empty keeps every file.
    /// Only applied in rigorous mode.
    pub extension_whitelist: Vec<String>,
    pub verb_filter: VerbFilter,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::rigorous()
    }
}

impl PipelineConfig {
    pub fn rigorous() -> Self {
        PipelineConfig {
            mode: Mode::Rigorous,
            max_msg_tokens: 30,
            min_msg_tokens: 2,
            max_diff_tokens: 100,
            extension_whitelist: vec!["java".into()],
            verb_filter: VerbFilter::StartsWithVerb,
        }
    }

    pub fn reference() -> Self {
        PipelineConfig {
            mode: Mode::Reference,
            max_msg_tokens: 30,
            min_msg_tokens: 1,
            max_diff_tokens: 100,
            extension_whitelist: Vec::new(),
            verb_filter: VerbFilter::VdoApprox,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.min_msg_tokens > self.max_msg_tokens {
            return Err(PipelineError::Config(format!(
                "min_msg_tokens {} exceeds max_msg_tokens {}",
                self.min_msg_tokens, self.max_msg_tokens
            )));
        }
        if self.max_diff_tokens == 0 {
            return Err(PipelineError::Config(
                "max_diff_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    fn effective_min_msg(&self) -> usize {
        match self.mode {
            Mode::Rigorous => self.min_msg_tokens.max(1),
            Mode::Reference => 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
}

/// A diff/message pair ready for vocabulary building and training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedExample {
    #[serde(rename = "sha")]
    pub origin_sha: String,
    #[serde(rename = "source")]
    pub source_tokens: Vec<String>,
    #[serde(rename = "target")]
    pub target_tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    MsgTooShort,
    MsgTooLong,
    NoVerb,
    EmptyDiff,
    DiffTooLong,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::MsgTooShort => "msg-too-short",
            RejectReason::MsgTooLong => "msg-too-long",
            RejectReason::NoVerb => "no-verb",
            RejectReason::EmptyDiff => "empty-diff",
            RejectReason::DiffTooLong => "diff-too-long",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rejection log record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub sha: String,
    pub reason: RejectReason,
}

/// A configured pipeline. Reference mode's leading-verb list is learned with
/// [`fit`](Self::fit).
#[derive(Debug, Clone)]
pub struct Preprocessor {
    cfg: PipelineConfig,
    lexicon: PosLexicon,
    top_verbs: Option<HashSet<String>>,
}

impl Preprocessor {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        Self::with_lexicon(cfg, PosLexicon::bundled().clone())
    }

    pub fn with_lexicon(cfg: PipelineConfig, lexicon: PosLexicon) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Preprocessor {
            cfg,
            lexicon,
            top_verbs: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn lexicon(&self) -> &PosLexicon {
        &self.lexicon
    }

    /// Counts the leading token of every message that passes the verb check
    /// and keeps the [`TOP_VERBS`] most frequent (ties lexicographic).
    pub fn fit<'c, I: IntoIterator<Item = &'c RawCommit>>(&mut self, commits: I) {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for c in commits {
            let toks = self.message_tokens(&c.message);
            if self.lexicon.starts_with_verb(&toks) {
                *counts.entry(toks[0].clone()).or_default() += 1;
            }
        }
        self.top_verbs = Some(top_k(counts, TOP_VERBS).into_iter().collect());
    }

    /// The fitted leading-verb list, most frequent first.
    pub fn set_top_verbs<I: IntoIterator<Item = String>>(&mut self, verbs: I) {
        self.top_verbs = Some(verbs.into_iter().collect());
    }

    pub fn top_verbs(&self) -> Option<Vec<String>> {
        self.top_verbs.as_ref().map(|s| {
            let mut v: Vec<String> = s.iter().cloned().collect();
            v.sort();
            v
        })
    }

    pub fn message_tokens(&self, raw: &str) -> Vec<String> {
        match self.cfg.mode {
            Mode::Reference => {
                let s = message::remove_issue_refs(&first_sentence(raw));
                message::word_punct(&s).map(str::to_lowercase).collect()
            }
            Mode::Rigorous => {
                let line = raw.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
                tokenize_message(&first_sentence(&clean_message(line)))
            }
        }
    }

    pub fn diff_tokens(&self, raw: &str) -> Vec<String> {
        match self.cfg.mode {
            Mode::Reference => {
                let s = message::remove_commit_ids(raw);
                message::word_punct(&s).map(str::to_lowercase).collect()
            }
            Mode::Rigorous => {
                clean_and_tokenize_diff(&parse_diff_lenient(raw), &self.cfg.extension_whitelist)
            }
        }
    }

    fn passes_verb_filter(&self, toks: &[String]) -> bool {
        match self.cfg.verb_filter {
            VerbFilter::Off => true,
            VerbFilter::StartsWithVerb => self.lexicon.starts_with_verb(toks),
            VerbFilter::VdoApprox => match &self.top_verbs {
                Some(top) => toks.first().is_some_and(|t| top.contains(t)),
                None => self.lexicon.starts_with_verb(toks),
            },
        }
    }

    pub fn process(&self, c: &RawCommit) -> Result<ProcessedExample, RejectReason> {
        let target = self.message_tokens(&c.message);
        if target.len() < self.cfg.effective_min_msg() {
            return Err(RejectReason::MsgTooShort);
        }
        if target.len() > self.cfg.max_msg_tokens {
            return Err(RejectReason::MsgTooLong);
        }
        if !self.passes_verb_filter(&target) {
            return Err(RejectReason::NoVerb);
        }
        let source = self.diff_tokens(&c.diff);
        if source.is_empty() {
            return Err(RejectReason::EmptyDiff);
        }
        if source.len() > self.cfg.max_diff_tokens {
            return Err(RejectReason::DiffTooLong);
        }
        Ok(ProcessedExample {
            origin_sha: c.sha.clone(),
            source_tokens: source,
            target_tokens: target,
        })
    }
}

fn top_k(counts: HashMap<String, usize>, k: usize) -> Vec<String> {
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(t, _)| t).collect()
}

/// Runs one commit through an unfitted pipeline with the bundled lexicon.
pub fn process_example(
    c: &RawCommit,
    cfg: &PipelineConfig,
) -> Result<ProcessedExample, RejectReason> {
    // An invalid config rejects nothing it could not also reject when valid;
    // callers that need the error use `Preprocessor::new`.
    let p = Preprocessor {
        cfg: cfg.clone(),
        lexicon: PosLexicon::bundled().clone(),
        top_verbs: None,
    };
    p.process(c)
}
