use std::collections::HashMap;

pub(crate) fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts
            .entry(w.iter().map(AsRef::as_ref).collect())
            .or_insert(0) += 1;
    }
    counts
}

/// Hypothesis n-grams that also occur in the reference, each clipped to its
/// reference count, and the number of hypothesis n-grams.
pub(crate) fn clipped_overlap<S: AsRef<str>, T: AsRef<str>>(
    reference: &[S],
    hypothesis: &[T],
    n: usize,
) -> (usize, usize) {
    let r = ngram_counts(reference, n);
    let h = ngram_counts(hypothesis, n);
    let matched = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, hypothesis.len().saturating_sub(n - 1))
}

fn brevity_penalty(ref_len: usize, hyp_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len <= ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    }
}

/// Corpus BLEU on a 0–100 scale: matches and candidate counts are summed over
/// all pairs before the precisions are formed. Any zero precision gives 0.
pub fn bleu_corpus<S: AsRef<str>, T: AsRef<str>>(pairs: &[(Vec<S>, Vec<T>)], max_n: usize) -> f64 {
    assert!(max_n >= 1, "max_n must be positive");
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut ref_len, mut hyp_len) = (0usize, 0usize);
    for (r, h) in pairs {
        ref_len += r.len();
        hyp_len += h.len();
        for n in 1..=max_n {
            let (m, t) = clipped_overlap(r, h, n);
            matched[n - 1] += m;
            total[n - 1] += t;
        }
    }
    if matched.contains(&0) {
        return 0.0;
    }
    let log_mean = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / max_n as f64;
    100.0 * brevity_penalty(ref_len, hyp_len) * log_mean.exp()
}

/// Sentence BLEU-4 in `[0, 1]` with add-one smoothing on every precision,
/// `(m + 1) / (c + 1)`. Used for re-ranking only.
pub fn sentence_bleu_smoothed<S: AsRef<str>, T: AsRef<str>>(
    reference: &[S],
    hypothesis: &[T],
) -> f64 {
    if hypothesis.is_empty() {
        return 0.0;
    }
    let log_mean = (1..=4)
        .map(|n| {
            let (m, c) = clipped_overlap(reference, hypothesis, n);
            ((m + 1) as f64 / (c + 1) as f64).ln()
        })
        .sum::<f64>()
        / 4.0;
    brevity_penalty(reference.len(), hypothesis.len()) * log_mean.exp()
}
