//! Corpus BLEU-4, ROUGE-N/L/W F1 and an exact-match METEOR.
//!
//! Every score in an [`EvalReport`] is on a 0–100 scale. BLEU is aggregated
//! over the whole corpus; ROUGE and METEOR are averaged over pairs.

mod bleu;
mod meteor;
mod rouge;

pub use bleu::{bleu_corpus, sentence_bleu_smoothed};
pub use meteor::{align, count_chunks, meteor, meteor_with, MeteorParams};
pub use rouge::{lcs_len, rouge_l, rouge_n, rouge_w, wlcs, Prf};

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{refs} references but {hyps} hypotheses")]
    Alignment { refs: usize, hyps: usize },
    #[error("cannot score an empty corpus")]
    EmptyCorpus,
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("bad table row: {0}")]
    Row(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub rouge_w_alpha: f64,
    pub meteor: MeteorParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rouge_w_alpha: 1.2,
            meteor: MeteorParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    #[serde(rename = "rouge1")]
    pub rouge1_f1: f64,
    #[serde(rename = "rouge2")]
    pub rouge2_f1: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l_f1: f64,
    #[serde(rename = "rougeW")]
    pub rouge_w_f1: f64,
    pub meteor: f64,
    #[serde(rename = "pairs")]
    pub pair_count: usize,
}

/// Which metric families to print.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSet {
    pub bleu: bool,
    pub rouge: bool,
    pub meteor: bool,
}

impl Default for MetricSet {
    fn default() -> Self {
        MetricSet {
            bleu: true,
            rouge: true,
            meteor: true,
        }
    }
}

impl FromStr for MetricSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = MetricSet {
            bleu: false,
            rouge: false,
            meteor: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "bleu" => set.bleu = true,
                "rouge" => set.rouge = true,
                "meteor" => set.meteor = true,
                other => {
                    return Err(format!(
                        "unknown metric {other:?} (expected bleu, rouge, meteor)"
                    ))
                }
            }
        }
        if set
            == (MetricSet {
                bleu: false,
                rouge: false,
                meteor: false,
            })
        {
            return Err("no metrics selected".into());
        }
        Ok(set)
    }
}

impl EvalReport {
    /// JSON object restricted to the selected metrics; `pairs` is always present.
    pub fn to_json(&self, metrics: MetricSet) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        let obj = v.as_object_mut().expect("report is an object");
        if !metrics.bleu {
            obj.remove("bleu");
        }
        if !metrics.rouge {
            for k in ["rouge1", "rouge2", "rougeL", "rougeW"] {
                obj.remove(k);
            }
        }
        if !metrics.meteor {
            obj.remove("meteor");
        }
        v
    }

    pub fn table_row(&self) -> TableRow {
        TableRow {
            bleu: self.bleu,
            rouge1: self.rouge1_f1,
            rouge2: self.rouge2_f1,
            rouge_l: self.rouge_l_f1,
            rouge_w: self.rouge_w_f1,
        }
    }
}

/// One results row: BLEU, ROUGE-1, ROUGE-2, ROUGE-L, ROUGE-W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub bleu: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub rouge_w: f64,
}

impl std::fmt::Display for TableRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:.2}/{:.2}/{:.2}/{:.2}/{:.2}",
            self.bleu, self.rouge1, self.rouge2, self.rouge_l, self.rouge_w
        )
    }
}

impl FromStr for TableRow {
    type Err = MetricsError;

    /// Five numbers separated by `/`, `&` or whitespace.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let nums = s
            .split(|c: char| c == '/' || c == '&' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| MetricsError::Row(format!("{p:?} is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let [bleu, rouge1, rouge2, rouge_l, rouge_w] = nums[..] else {
            return Err(MetricsError::Row(format!(
                "expected 5 columns, found {}",
                nums.len()
            )));
        };
        Ok(TableRow {
            bleu,
            rouge1,
            rouge2,
            rouge_l,
            rouge_w,
        })
    }
}

pub fn evaluate_pairs<S: AsRef<str>, T: AsRef<str>>(
    pairs: &[(Vec<S>, Vec<T>)],
    cfg: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let n = pairs.len() as f64;
    let mean =
        |f: &dyn Fn(&[S], &[T]) -> f64| 100.0 * pairs.iter().map(|(r, h)| f(r, h)).sum::<f64>() / n;
    Ok(EvalReport {
        bleu: bleu_corpus(pairs, 4),
        rouge1_f1: mean(&|r, h| rouge_n(r, h, 1).f1),
        rouge2_f1: mean(&|r, h| rouge_n(r, h, 2).f1),
        rouge_l_f1: mean(&|r, h| rouge_l(r, h)),
        rouge_w_f1: mean(&|r, h| rouge_w(r, h, cfg.rouge_w_alpha)),
        meteor: mean(&|r, h| meteor_with(r, h, &cfg.meteor)),
        pair_count: pairs.len(),
    })
}

/// Reads one token sequence per line. A line holding a JSON object is read
/// through its `hypothesis` or `target` array (generator and preprocessor
/// output); any other line is split on whitespace.
pub fn read_sequences(path: &Path) -> Result<Vec<Vec<String>>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_sequences(&text).map_err(|(line, message)| MetricsError::Parse {
        path: path.display().to_string(),
        line,
        message,
    })
}

pub(crate) fn parse_sequences(text: &str) -> Result<Vec<Vec<String>>, (usize, String)> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            if !line.trim_start().starts_with('{') {
                return Ok(line.split_whitespace().map(str::to_string).collect());
            }
            let v: serde_json::Value =
                serde_json::from_str(line).map_err(|e| (i + 1, e.to_string()))?;
            let arr = v
                .get("hypothesis")
                .or_else(|| v.get("target"))
                .and_then(|a| a.as_array())
                .ok_or((
                    i + 1,
                    "object has no \"hypothesis\" or \"target\" array".to_string(),
                ))?;
            arr.iter()
                .map(|t| {
                    t.as_str()
                        .map(str::to_string)
                        .ok_or((i + 1, "non-string token".to_string()))
                })
                .collect()
        })
        .collect()
}

pub fn evaluate(
    refs_path: &Path,
    hyps_path: &Path,
    cfg: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    let refs = read_sequences(refs_path)?;
    let hyps = read_sequences(hyps_path)?;
    if refs.len() != hyps.len() {
        return Err(MetricsError::Alignment {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    let pairs: Vec<(Vec<String>, Vec<String>)> = refs.into_iter().zip(hyps).collect();
    evaluate_pairs(&pairs, cfg)
}
