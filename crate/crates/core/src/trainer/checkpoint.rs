//! On-disk model snapshots: `manifest.json` plus `params.bin`.
//!
//! `params.bin` holds every parameter tensor as little-endian `f32`,
//! row-major, at the byte offsets listed in the manifest. The manifest also
//! records the vocabulary fingerprints the model was trained with and an
//! FNV-1a 64 checksum of the payload.

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Tensor;
use crate::seq2seq::{ModelConfig, ModelError, ModelParams, Seq2Seq};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint schema version {0}")]
    Schema(u32),
    #[error("{side} vocabulary fingerprint mismatch: checkpoint has {stored}, given {given}")]
    Fingerprint {
        side: &'static str,
        stored: String,
        given: String,
    },
    #[error("payload is {found} bytes, manifest expects {expected}")]
    Truncated { expected: usize, found: usize },
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub model: ModelConfig,
    /// Hex FNV-1a 64 fingerprints, see `Vocabulary::fingerprint`.
    pub src_vocab_fingerprint: String,
    pub tgt_vocab_fingerprint: String,
    pub params: Vec<ParamEntry>,
    pub payload_bytes: usize,
    pub payload_fnv1a64: String,
    pub best_valid_loss: Option<f64>,
    pub epoch: usize,
}

/// Vocabulary fingerprints a checkpoint is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabFingerprints {
    pub src: u64,
    pub tgt: u64,
}

pub fn fingerprint_hex(f: u64) -> String {
    format!("{f:016x}")
}

fn checksum(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    fingerprint_hex(h.finish())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

/// Writes `model` into `dir` (created if needed). Each file is written to a
/// temporary name and renamed into place; the manifest goes last.
pub fn save_checkpoint(
    dir: &Path,
    model: &Seq2Seq,
    vocabs: VocabFingerprints,
    best_valid_loss: Option<f64>,
    epoch: usize,
) -> Result<CheckpointManifest, CheckpointError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut payload = Vec::with_capacity(model.params.num_parameters() * 4);
    let mut entries = Vec::new();
    for (name, t) in model.params.named() {
        let offset = payload.len();
        for &v in t.data() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
        entries.push(ParamEntry {
            name,
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            offset,
            bytes: payload.len() - offset,
        });
    }
    let manifest = CheckpointManifest {
        schema_version: SCHEMA_VERSION,
        model: model.config.clone(),
        src_vocab_fingerprint: fingerprint_hex(vocabs.src),
        tgt_vocab_fingerprint: fingerprint_hex(vocabs.tgt),
        params: entries,
        payload_bytes: payload.len(),
        payload_fnv1a64: checksum(&payload),
        best_valid_loss,
        epoch,
    };
    write_atomic(&dir.join(PARAMS_FILE), &payload)?;
    write_atomic(
        &dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest, CheckpointError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: CheckpointManifest = serde_json::from_str(&text)?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(CheckpointError::Schema(m.schema_version));
    }
    Ok(m)
}

/// Loads a checkpoint. With `expect` set, both vocabulary fingerprints must
/// match the stored ones.
pub fn load_checkpoint(
    dir: &Path,
    expect: Option<VocabFingerprints>,
) -> Result<(Seq2Seq, CheckpointManifest), CheckpointError> {
    let manifest = read_manifest(dir)?;
    if let Some(v) = expect {
        for (side, stored, given) in [
            ("source", &manifest.src_vocab_fingerprint, v.src),
            ("target", &manifest.tgt_vocab_fingerprint, v.tgt),
        ] {
            if *stored != fingerprint_hex(given) {
                return Err(CheckpointError::Fingerprint {
                    side,
                    stored: stored.clone(),
                    given: fingerprint_hex(given),
                });
            }
        }
    }
    let path = dir.join(PARAMS_FILE);
    let payload = std::fs::read(&path).map_err(io_err(&path))?;
    if payload.len() != manifest.payload_bytes {
        return Err(CheckpointError::Truncated {
            expected: manifest.payload_bytes,
            found: payload.len(),
        });
    }
    if checksum(&payload) != manifest.payload_fnv1a64 {
        return Err(CheckpointError::Integrity(
            "payload checksum mismatch".into(),
        ));
    }

    manifest.model.validate()?;
    let mut params = ModelParams::zeros(&manifest.model);
    let expected: Vec<(String, Vec<usize>)> = params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if expected.len() != manifest.params.len() {
        return Err(CheckpointError::Integrity(format!(
            "{} parameter entries, model needs {}",
            manifest.params.len(),
            expected.len()
        )));
    }
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for ((entry, (name, shape)), tensor) in manifest
        .params
        .iter()
        .zip(&expected)
        .zip(params.tensors_mut())
    {
        if entry.name != *name || entry.shape != *shape || entry.dtype != "f32" {
            return Err(CheckpointError::Integrity(format!(
                "unexpected entry {}",
                entry.name
            )));
        }
        let numel: usize = shape.iter().product();
        let end = entry
            .offset
            .checked_add(entry.bytes)
            .filter(|&e| e <= payload.len());
        let Some(end) = end.filter(|_| entry.bytes == numel * 4) else {
            return Err(CheckpointError::Integrity(format!(
                "{} lies outside the payload",
                entry.name
            )));
        };
        spans.push((entry.offset, end));
        let data: Vec<f64> = payload[entry.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        *tensor = Tensor::new(shape.clone(), data)
            .map_err(ModelError::from)?
            .with_grad();
    }
    spans.sort_unstable();
    if spans.windows(2).any(|w| w[0].1 > w[1].0) {
        return Err(CheckpointError::Integrity("parameter spans overlap".into()));
    }
    let model = Seq2Seq::new(manifest.model.clone(), params)?;
    if !model.params.is_finite() {
        return Err(CheckpointError::Integrity("non-finite parameter".into()));
    }
    Ok((model, manifest))
}
