//! Attentional GRU encoder-decoder.
//!
//! The encoder is a bidirectional GRU whose per-position states are the
//! concatenation `[forward; backward]`. The decoder is a unidirectional GRU
//! initialised from `tanh(bridge([forward_last; backward_last]))` and fed
//! `[embed(y_prev); context]` at every step, where the context is an additive
//! attention read of the encoder states. Output logits are an affine map of
//! `[decoder_state; embed(y_prev); context]`.
//!
//! GRU cell (reset gate applied to the recurrent term):
//!
//! ```text
//! z  = σ(x·W_z + h·U_z + b_z)
//! r  = σ(x·W_r + h·U_r + b_r)
//! n  = tanh(x·W_n + (r ⊙ h)·U_n + b_n)
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

mod attention;
mod model;
mod params;

pub use attention::{render_heatmap_svg, AttentionDump, AttentionMap};
pub use model::{Batch, EncoderOutput, ForwardOptions, Gradients, Seq2Seq};
pub use params::{GruParams, ModelParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    Range { id: usize, size: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("malformed batch: {0}")]
    Batch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Per-direction encoder width and decoder width.
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub embed_dropout: f64,
    pub max_decode_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            src_vocab: 4,
            tgt_vocab: 4,
            hidden_dim: 512,
            embed_dim: 256,
            embed_dropout: 0.1,
            max_decode_len: 30,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.src_vocab == 0 || self.tgt_vocab == 0 || self.hidden_dim == 0 || self.embed_dim == 0
        {
            return Err(ModelError::Config("all dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.embed_dropout) {
            return Err(ModelError::Config(format!(
                "embed_dropout {} outside [0, 1)",
                self.embed_dropout
            )));
        }
        Ok(())
    }

    /// Width of the attention score network.
    pub fn attn_dim(&self) -> usize {
        self.hidden_dim
    }
}

#[cfg(test)]
mod tests;
