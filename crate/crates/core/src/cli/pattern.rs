use super::CliError;

pub const WILDCARD: &str = "<*>";

/// Whether `tokens` match `pattern`, where each `<*>` stands for one or more
/// tokens and every other pattern token must match exactly.
pub fn matches_pattern<S: AsRef<str>>(tokens: &[S], pattern: &[&str]) -> bool {
    // reach[j]: the first j pattern items can consume the tokens seen so far.
    let mut reach = vec![false; pattern.len() + 1];
    reach[0] = true;
    for t in tokens {
        let mut next = vec![false; pattern.len() + 1];
        for (j, p) in pattern.iter().enumerate() {
            if *p == WILDCARD {
                // Either start the wildcard here or extend it.
                next[j + 1] = reach[j] || reach[j + 1];
            } else if *p == t.as_ref() {
                next[j + 1] = reach[j];
            }
        }
        reach = next;
    }
    reach[pattern.len()]
}

/// Fraction of `messages` matching the whitespace-separated `pattern`.
pub fn count_pattern<S: AsRef<str>>(messages: &[Vec<S>], pattern: &str) -> Result<f64, CliError> {
    if messages.is_empty() {
        return Err(CliError::Data("no messages to match against".into()));
    }
    let pat: Vec<&str> = pattern.split_whitespace().collect();
    if pat.is_empty() {
        return Err(CliError::Usage("empty pattern".into()));
    }
    let hits = messages.iter().filter(|m| matches_pattern(m, &pat)).count();
    Ok(hits as f64 / messages.len() as f64)
}
