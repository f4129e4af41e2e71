//! Mini-batch SGD training with plateau decay, early stopping and
//! best-by-validation checkpointing.

mod checkpoint;
mod schedule;

pub use checkpoint::{
    fingerprint_hex, load_checkpoint, read_manifest, save_checkpoint, CheckpointError,
    CheckpointManifest, ParamEntry, VocabFingerprints, MANIFEST_FILE, PARAMS_FILE, SCHEMA_VERSION,
};
pub use schedule::{ScheduleDecision, Scheduler};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::ProcessedExample;
use crate::seq2seq::{Batch, ForwardOptions, Gradients, ModelError, ModelParams, Seq2Seq};
use crate::vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite gradient in block {block}")]
    NonFiniteGradient { block: String },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub teacher_forcing_p: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Global L2 gradient norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            lr_decay_factor: 0.1,
            plateau_patience: 10,
            early_stop_patience: 20,
            batch_size: 64,
            teacher_forcing_p: 0.5,
            max_epochs: 200,
            seed: 0,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a finite non-negative number");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return bad("lr_decay_factor must lie in (0, 1)");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing_p) {
            return bad("teacher_forcing_p must lie in [0, 1]");
        }
        if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

/// Id sequences of one example, each wrapped in `SOS … EOS`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

pub fn encode_pairs(
    examples: &[ProcessedExample],
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Vec<EncodedPair> {
    examples
        .iter()
        .map(|e| EncodedPair {
            src: src_vocab.encode(&e.source_tokens, true),
            tgt: tgt_vocab.encode(&e.target_tokens, true),
        })
        .collect()
}

/// A padded batch plus the positions of its members in the input slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedBatch {
    pub batch: Batch,
    pub indices: Vec<usize>,
    pub src_lengths: Vec<usize>,
    pub tgt_lengths: Vec<usize>,
}

/// Groups `pairs` into batches of `batch_size` (the last may be smaller).
/// With a seed the order is a seeded shuffle, otherwise input order.
pub fn make_batches(
    pairs: &[EncodedPair],
    batch_size: usize,
    seed: Option<u64>,
) -> Vec<PreparedBatch> {
    assert!(batch_size > 0, "batch_size must be positive");
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    if let Some(seed) = seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
        .chunks(batch_size)
        .map(|idx| {
            let members: Vec<(&[usize], &[usize])> = idx
                .iter()
                .map(|&i| (pairs[i].src.as_slice(), pairs[i].tgt.as_slice()))
                .collect();
            let batch = Batch::from_pairs(&members);
            PreparedBatch {
                src_lengths: batch.src_lengths(),
                tgt_lengths: batch.tgt_lengths(),
                batch,
                indices: idx.to_vec(),
            }
        })
        .collect()
}

/// `θ ← θ − lr · g` for every block. Nothing is updated when any gradient
/// is non-finite.
pub fn sgd_step(params: &mut ModelParams, grads: Gradients, lr: f64) -> Result<(), TrainError> {
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    for (name, g) in names.iter().zip(&grads.blocks) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient {
                block: name.clone(),
            });
        }
    }
    for (t, g) in params.tensors_mut().into_iter().zip(&grads.blocks) {
        t.data_mut()
            .iter_mut()
            .zip(g)
            .for_each(|(p, &d)| *p -= lr * d);
    }
    Ok(())
}

/// Mean loss per scored target token over `pairs`, fully teacher-forced and
/// without dropout.
pub fn evaluate_loss(
    model: &Seq2Seq,
    pairs: &[EncodedPair],
    batch_size: usize,
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for b in make_batches(pairs, batch_size, None) {
        let n = b.batch.num_target_tokens();
        total += model.forward_loss(&b.batch, &ForwardOptions::eval())? * n as f64;
        tokens += n;
    }
    Ok(if tokens == 0 {
        0.0
    } else {
        total / tokens as f64
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Rate used during this epoch.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,valid_loss,lr,seconds\n");
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.3}",
                r.epoch, r.train_loss, r.valid_loss, r.lr, r.seconds
            );
        }
        s
    }

    pub fn min_valid_loss(&self) -> Option<f64> {
        self.epochs
            .iter()
            .map(|r| r.valid_loss)
            .filter(|v| !v.is_nan())
            .reduce(f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    /// The epoch callback asked to stop.
    Requested,
    /// A loss or gradient became non-finite in this epoch.
    NonFinite {
        epoch: usize,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss (the initial parameters if
    /// no epoch completed).
    pub best: Seq2Seq,
    pub best_valid_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub log: TrainLog,
    pub stop: StopReason,
}

/// Where and with which vocabulary fingerprints to write checkpoints.
/// `dir/last` is rewritten after every epoch and `dir/best` on improvement.
#[derive(Debug, Clone)]
pub struct CheckpointSink {
    pub dir: PathBuf,
    pub vocabs: VocabFingerprints,
}

impl CheckpointSink {
    pub fn best_dir(&self) -> PathBuf {
        self.dir.join("best")
    }

    pub fn last_dir(&self) -> PathBuf {
        self.dir.join("last")
    }
}

fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    // splitmix64-style mixing so nearby (epoch, batch) pairs get unrelated streams.
    let mut z = seed ^ ((epoch as u64) << 32) ^ batch as u64;
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn train(
    model: Seq2Seq,
    train_set: &[EncodedPair],
    valid_set: &[EncodedPair],
    cfg: &TrainConfig,
    sink: Option<&CheckpointSink>,
) -> Result<TrainOutcome, TrainError> {
    train_with(model, train_set, valid_set, cfg, sink, |_| true)
}

/// [`train`] with a callback after every completed epoch; returning `false`
/// ends training after that epoch.
pub fn train_with(
    mut model: Seq2Seq,
    train_set: &[EncodedPair],
    valid_set: &[EncodedPair],
    cfg: &TrainConfig,
    sink: Option<&CheckpointSink>,
    mut on_epoch: impl FnMut(&EpochRecord) -> bool,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if valid_set.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let mut sched = Scheduler::new(
        cfg.lr,
        cfg.lr_decay_factor,
        cfg.plateau_patience,
        cfg.early_stop_patience,
    );
    let mut log = TrainLog::default();
    let mut best = model.clone();
    let mut best_valid_loss = None;
    let mut best_epoch = None;
    if let Some(s) = sink {
        if cfg.max_epochs == 0 {
            save_checkpoint(&s.best_dir(), &best, s.vocabs, None, 0)?;
        }
    }
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let lr = sched.lr();
        let mut total = 0.0;
        let mut tokens = 0usize;
        for (k, b) in make_batches(
            train_set,
            cfg.batch_size,
            Some(batch_seed(cfg.seed, epoch, usize::MAX)),
        )
        .into_iter()
        .enumerate()
        {
            let opts = ForwardOptions {
                teacher_forcing_p: cfg.teacher_forcing_p,
                seed: batch_seed(cfg.seed, epoch, k),
                train: true,
            };
            let (loss, mut grads) = model.loss_and_grads(&b.batch, &opts)?;
            if !loss.is_finite() || !grads.is_finite() {
                stop = StopReason::NonFinite { epoch };
                break 'epochs;
            }
            if let Some(c) = cfg.clip_norm {
                grads.clip_to_norm(c);
            }
            sgd_step(&mut model.params, grads, lr)?;
            let n = b.batch.num_target_tokens();
            total += loss * n as f64;
            tokens += n;
        }
        let train_loss = total / tokens.max(1) as f64;
        let valid_loss = evaluate_loss(&model, valid_set, cfg.batch_size)?;
        if !valid_loss.is_finite() || !model.params.is_finite() {
            stop = StopReason::NonFinite { epoch };
            break;
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        };
        let decision = sched.step(valid_loss);
        if decision.improved {
            best = model.clone();
            best_valid_loss = Some(valid_loss);
            best_epoch = Some(epoch);
            if let Some(s) = sink {
                save_checkpoint(&s.best_dir(), &best, s.vocabs, best_valid_loss, epoch)?;
            }
        }
        if let Some(s) = sink {
            save_checkpoint(&s.last_dir(), &model, s.vocabs, best_valid_loss, epoch)?;
        }
        let proceed = on_epoch(&record);
        log.epochs.push(record);
        if decision.stop {
            stop = StopReason::EarlyStop;
            break;
        }
        if !proceed {
            stop = StopReason::Requested;
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        best_valid_loss,
        best_epoch,
        log,
        stop,
    })
}

/// Loads `dir/best` if present, else `dir` itself.
pub fn resolve_checkpoint_dir(dir: &Path) -> PathBuf {
    let best = dir.join("best");
    if best.join(MANIFEST_FILE).exists() {
        best
    } else {
        dir.to_path_buf()
    }
}
