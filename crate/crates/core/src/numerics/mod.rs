//! Dense tensors and a reverse-mode autodiff tape.
//!
//! All arithmetic is `f64`; narrower storage only appears when checkpoints
//! are written. Broadcasting is limited to a single row or a scalar on the
//! right-hand operand.

mod tape;
mod tensor;

pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::softmax_row;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("index {index} out of range for {len} rows")]
    Range { index: usize, len: usize },
    #[error("loss must be a scalar, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("backward already ran on this tape; call reset() first")]
    AlreadyBackpropagated,
}

/// Softmax of a single vector with an optional keep-mask, outside any tape.
pub fn softmax(x: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>, NumericsError> {
    if let Some(m) = mask {
        if m.len() != x.len() {
            return Err(NumericsError::Shape(format!(
                "mask of {} for {} values",
                m.len(),
                x.len()
            )));
        }
    }
    let mut out = vec![0.0; x.len()];
    softmax_row(x, mask, &mut out)
        .map_err(|_| NumericsError::Domain("softmax input is fully masked".into()))?;
    Ok(out)
}
