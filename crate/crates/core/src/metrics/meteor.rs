use serde::{Deserialize, Serialize};

/// `F_mean = P·R / (alpha·P + (1 − alpha)·R)` and
/// `penalty = gamma · (chunks / matches)^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeteorParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        MeteorParams {
            alpha: 0.9,
            gamma: 0.5,
            beta: 3.0,
        }
    }
}

/// Exact-match alignment: each hypothesis token, left to right, takes the
/// leftmost unused reference position holding the same token.
pub fn align<S: AsRef<str>, T: AsRef<str>>(
    reference: &[S],
    hypothesis: &[T],
) -> Vec<(usize, usize)> {
    let mut used = vec![false; reference.len()];
    let mut out = Vec::new();
    for (j, h) in hypothesis.iter().enumerate() {
        if let Some(i) =
            (0..reference.len()).find(|&i| !used[i] && reference[i].as_ref() == h.as_ref())
        {
            used[i] = true;
            out.push((j, i));
        }
    }
    out
}

/// Maximal runs of alignment pairs adjacent in both sequences.
pub fn count_chunks(alignment: &[(usize, usize)]) -> usize {
    if alignment.is_empty() {
        return 0;
    }
    1 + alignment
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

pub fn meteor<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hypothesis: &[T]) -> f64 {
    meteor_with(reference, hypothesis, &MeteorParams::default())
}

pub fn meteor_with<S: AsRef<str>, T: AsRef<str>>(
    reference: &[S],
    hypothesis: &[T],
    p: &MeteorParams,
) -> f64 {
    let alignment = align(reference, hypothesis);
    let matches = alignment.len();
    if matches == 0 {
        return 0.0;
    }
    let precision = matches as f64 / hypothesis.len() as f64;
    let recall = matches as f64 / reference.len() as f64;
    let fmean = precision * recall / (p.alpha * precision + (1.0 - p.alpha) * recall);
    let penalty = p.gamma * (count_chunks(&alignment) as f64 / matches as f64).powf(p.beta);
    fmean * (1.0 - penalty)
}
