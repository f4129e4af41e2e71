//! Raw commit ingestion, commit-level filters, splitting and statistics.

mod git;
mod split;
mod stats;

pub use git::read_git_repo;
pub use split::{sample_and_split, Split, SplitSpec};
pub use stats::{corpus_stats, render_histogram_svg, CorpusStats};

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("git: {0}")]
    Git(String),
    #[error("corpus has {available} examples but {requested} were requested")]
    TooSmall { available: usize, requested: usize },
    #[error("invalid split: {0}")]
    Split(String),
    #[error("invalid filter configuration: {0}")]
    Config(String),
}

/// One commit as ingested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCommit {
    #[serde(default)]
    pub repo: String,
    pub sha: String,
    pub message: String,
    pub diff: String,
    pub parent_count: u32,
}

pub fn is_valid_sha(sha: &str) -> bool {
    sha.len() == 40 && sha.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    GitRepo,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "git" | "git-repo" => Ok(CorpusFormat::GitRepo),
            other => Err(format!(
                "unknown corpus format {other:?} (expected jsonl or git-repo)"
            )),
        }
    }
}

/// Streams commits from a JSONL archive. Malformed lines yield a
/// [`CorpusError::Record`] and reading continues with the next line.
pub struct JsonlCommits {
    reader: BufReader<File>,
    line: usize,
    buf: Vec<u8>,
}

impl JsonlCommits {
    pub fn open(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(JsonlCommits {
            reader: BufReader::new(file),
            line: 0,
            buf: Vec::new(),
        })
    }
}

pub(crate) fn parse_record(text: &str, line: usize) -> Result<RawCommit, CorpusError> {
    let err = |message: String| CorpusError::Record { line, message };
    let c: RawCommit = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    if !is_valid_sha(&c.sha) {
        return Err(err(format!(
            "sha {:?} is not 40 lowercase hex digits",
            c.sha
        )));
    }
    Ok(c)
}

impl Iterator for JsonlCommits {
    type Item = Result<RawCommit, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return Some(Err(CorpusError::Record {
                        line: self.line + 1,
                        message: e.to_string(),
                    }))
                }
            }
            self.line += 1;
            let text = String::from_utf8_lossy(&self.buf);
            if text.trim().is_empty() {
                continue;
            }
            return Some(parse_record(&text, self.line));
        }
    }
}

/// Commits from a JSONL archive (file order) or a local git repository
/// (newest first, at most `per_repo_cap`).
pub fn read_corpus(
    path: &Path,
    format: CorpusFormat,
    per_repo_cap: usize,
) -> Result<Box<dyn Iterator<Item = Result<RawCommit, CorpusError>>>, CorpusError> {
    match format {
        CorpusFormat::Jsonl => Ok(Box::new(JsonlCommits::open(path)?)),
        CorpusFormat::GitRepo => Ok(Box::new(
            read_git_repo(path, per_repo_cap)?.into_iter().map(Ok),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommitFilterConfig {
    pub max_diff_bytes: usize,
    pub drop_merges: bool,
    pub drop_initial: bool,
    pub per_repo_cap: usize,
}

impl Default for CommitFilterConfig {
    fn default() -> Self {
        CommitFilterConfig {
            max_diff_bytes: 1 << 20,
            drop_merges: true,
            drop_initial: true,
            per_repo_cap: 10_000,
        }
    }
}

impl CommitFilterConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.max_diff_bytes == 0 || self.per_repo_cap == 0 {
            return Err(CorpusError::Config(
                "max_diff_bytes and per_repo_cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterDecision {
    Keep,
    Merge,
    Initial,
    Oversize,
}

impl FilterDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterDecision::Keep => "keep",
            FilterDecision::Merge => "merge",
            FilterDecision::Initial => "initial",
            FilterDecision::Oversize => "oversize",
        }
    }
}

pub fn filter_commit(c: &RawCommit, cfg: &CommitFilterConfig) -> FilterDecision {
    if cfg.drop_merges && c.parent_count > 1 {
        FilterDecision::Merge
    } else if cfg.drop_initial && c.parent_count == 0 {
        FilterDecision::Initial
    } else if c.diff.len() > cfg.max_diff_bytes {
        FilterDecision::Oversize
    } else {
        FilterDecision::Keep
    }
}
