use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::DEFAULT_K;
use crate::corpus::{CommitFilterConfig, SplitSpec};
use crate::metrics::EvalConfig;
use crate::preprocess::{Mode, PipelineConfig};
use crate::seq2seq::ModelConfig;
use crate::trainer::TrainConfig;

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabConfig {
    pub min_freq: usize,
    /// Total size bound including the four specials.
    pub max_size: Option<usize>,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            min_freq: 1,
            max_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NngenConfig {
    pub k: usize,
}

impl Default for NngenConfig {
    fn default() -> Self {
        NngenConfig { k: DEFAULT_K }
    }
}

/// Everything a run can be configured with. Every section and field is
/// optional; unknown keys are rejected. `model.src_vocab` and
/// `model.tgt_vocab` are replaced by the sizes of the vocabularies in use.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub filter: CommitFilterConfig,
    /// Absent means "the preset selected by `--pipeline`".
    pub pipeline: Option<PipelineConfig>,
    pub split: SplitSpec,
    pub vocab: VocabConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub nngen: NngenConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(RunConfig::default()), Self::load)
    }

    /// Pipeline after applying a `--pipeline` flag. With a configured
    /// pipeline section only its mode changes; otherwise the flag picks the
    /// matching preset.
    pub fn resolved_pipeline(&self, flag: Option<Mode>) -> PipelineConfig {
        match (&self.pipeline, flag) {
            (Some(p), Some(mode)) => PipelineConfig { mode, ..p.clone() },
            (Some(p), None) => p.clone(),
            (None, Some(Mode::Reference)) => PipelineConfig::reference(),
            (None, _) => PipelineConfig::rigorous(),
        }
    }

    /// Threads one seed into every random component.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.split.seed = s;
            self.train.seed = s;
        }
    }
}
