use super::bleu::clipped_overlap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(num: f64, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

pub fn rouge_n<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hypothesis: &[T], n: usize) -> Prf {
    assert!(n >= 1, "n must be positive");
    let (overlap, hyp_grams) = clipped_overlap(reference, hypothesis, n);
    let ref_grams = reference.len().saturating_sub(n - 1);
    Prf::new(
        ratio(overlap as f64, hyp_grams),
        ratio(overlap as f64, ref_grams),
    )
}

pub fn lcs_len<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = prev.clone();
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1.
pub fn rouge_l<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hypothesis: &[T]) -> f64 {
    let lcs = lcs_len(reference, hypothesis) as f64;
    Prf::new(ratio(lcs, hypothesis.len()), ratio(lcs, reference.len())).f1
}

/// Weighted LCS score with run weight `f(k) = k^alpha`: extending a run of
/// `k` consecutive matches to `k + 1` adds `f(k+1) − f(k)`.
pub fn wlcs<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hypothesis: &[T], alpha: f64) -> f64 {
    let f = |k: usize| (k as f64).powf(alpha);
    let cols = hypothesis.len() + 1;
    let mut c = vec![0.0f64; (reference.len() + 1) * cols];
    let mut w = vec![0usize; (reference.len() + 1) * cols];
    for i in 1..=reference.len() {
        for j in 1..=hypothesis.len() {
            let at = i * cols + j;
            if reference[i - 1].as_ref() == hypothesis[j - 1].as_ref() {
                let k = w[at - cols - 1];
                c[at] = c[at - cols - 1] + f(k + 1) - f(k);
                w[at] = k + 1;
            } else if c[at - cols] > c[at - 1] {
                c[at] = c[at - cols];
            } else {
                c[at] = c[at - 1];
            }
        }
    }
    c[reference.len() * cols + hypothesis.len()]
}

/// ROUGE-W F1 with `P = f⁻¹(WLCS / f(|hyp|))` and `R = f⁻¹(WLCS / f(|ref|))`.
pub fn rouge_w<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hypothesis: &[T], alpha: f64) -> f64 {
    assert!(alpha > 1.0, "ROUGE-W needs alpha > 1");
    if reference.is_empty() || hypothesis.is_empty() {
        return 0.0;
    }
    let score = wlcs(reference, hypothesis, alpha);
    let inv = |x: f64| x.powf(1.0 / alpha);
    let p = inv(score / (hypothesis.len() as f64).powf(alpha));
    let r = inv(score / (reference.len() as f64).powf(alpha));
    Prf::new(p, r).f1
}
