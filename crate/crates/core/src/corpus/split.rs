use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub sample_size: usize,
    /// Train, validation and test fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            sample_size: 36_000,
            ratios: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(CorpusError::Split(format!(
                "ratios {:?} outside [0, 1]",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(CorpusError::Split(format!(
                "ratios sum to {sum}, expected 1"
            )));
        }
        if self.sample_size < 10 {
            return Err(CorpusError::Split(format!(
                "sample_size {} below 10",
                self.sample_size
            )));
        }
        Ok(())
    }
}

/// Indices into the input sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Uniform draw from `0..bound` by rejection, so the result does not depend on
/// any library's range-sampling algorithm.
fn bounded(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % bound;
        }
    }
}

// Guards against ratios such as 0.1 · 10 = 0.9999999999999999 flooring to 0.
const FLOOR_SLACK: f64 = 1e-9;

/// Samples `spec.sample_size` of `n` indices without replacement (partial
/// Fisher–Yates over a ChaCha8 stream seeded with `spec.seed`), then cuts the
/// sample into validation and test parts of `floor(size · ratio)` items; the
/// remainder is training data.
pub fn sample_and_split(n: usize, spec: &SplitSpec) -> Result<Split, CorpusError> {
    spec.validate()?;
    let k = spec.sample_size;
    if n < k {
        return Err(CorpusError::TooSmall {
            available: n,
            requested: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + bounded(&mut rng, (n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k);
    let n_valid = (k as f64 * spec.ratios[1] + FLOOR_SLACK).floor() as usize;
    let n_test = (k as f64 * spec.ratios[2] + FLOOR_SLACK).floor() as usize;
    let n_train = k - n_valid - n_test;
    let test = idx.split_off(n_train + n_valid);
    let valid = idx.split_off(n_train);
    Ok(Split {
        train: idx,
        valid,
        test,
    })
}
