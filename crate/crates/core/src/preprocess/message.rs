//! Commit message cleaning, sentence selection and tokenization.

use std::sync::LazyLock;

use regex::{Captures, Regex};

pub const VERSION_TOKEN: &str = "<version>";

static LABEL_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\[[^\]]*\]\s*)+").unwrap());
static ISSUE_PAREN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(\s*#\d+\s*\)").unwrap());
static ISSUE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#\d+\b").unwrap());
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@[A-Za-z0-9][\w-]*").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"https?://\S+").unwrap());
static HEX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b[0-9a-fA-F]{7,40}\b").unwrap());
static VERSION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bv?\d+(?:\.\d+)+(?:-\w+)?\b").unwrap());
static CAMEL_LOWER_UPPER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([a-z])([A-Z])").unwrap());
static CAMEL_ACRONYM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([A-Z])([A-Z][a-z])").unwrap());
static WORD_PUNCT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<version>|\w+|[^\w\s]+").unwrap());

const MAX_CLEAN_PASSES: usize = 16;

/// Replaces commit-hash-like hex runs (7 to 40 hex digits, at least one
/// decimal digit so ordinary words such as "defaced" survive).
pub(crate) fn remove_commit_ids(text: &str) -> String {
    HEX.replace_all(text, |c: &Captures| {
        if c[0].bytes().any(|b| b.is_ascii_digit()) {
            " ".to_string()
        } else {
            c[0].to_string()
        }
    })
    .into_owned()
}

pub(crate) fn remove_issue_refs(text: &str) -> String {
    let t = ISSUE_PAREN.replace_all(text, " ");
    ISSUE.replace_all(&t, " ").into_owned()
}

fn clean_once(raw: &str) -> String {
    let t = LABEL_PREFIX.replace(raw, "");
    let t = remove_issue_refs(&t);
    let t = MENTION.replace_all(&t, " ");
    let t = URL.replace_all(&t, " ");
    let t = remove_commit_ids(&t);
    let t = VERSION.replace_all(&t, " <version> ");
    let t = CAMEL_LOWER_UPPER.replace_all(&t, "$1 $2");
    let t = CAMEL_ACRONYM.replace_all(&t, "$1 $2");
    let t: String = t
        .chars()
        .filter_map(|c| match c {
            ' '..='~' => Some(c),
            c if c.is_whitespace() => Some(' '),
            _ => None,
        })
        .collect();
    collapse_ws(&t.to_lowercase())
}

/// Label prefixes, issue references, mentions, URLs and commit hashes are
/// removed; version numbers become `<version>`; camelCase words are split;
/// everything outside printable ASCII is dropped; the result is lowercased
/// with single spaces. Idempotent.
pub fn clean_message(raw: &str) -> String {
    let mut cur = clean_once(raw);
    for _ in 0..MAX_CLEAN_PASSES {
        let next = clean_once(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

pub(crate) fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Text of the first line up to the first `.`, `!` or `?` that is followed
/// by whitespace or the end of the line, without trailing punctuation.
pub fn first_sentence(text: &str) -> String {
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let bytes = line.as_bytes();
    let mut end = line.len();
    for (i, &b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?')
            && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace())
        {
            end = i;
            break;
        }
    }
    let s = collapse_ws(&line[..end]);
    s.trim_end_matches(|c: char| {
        matches!(c, '.' | '!' | '?' | ',' | ';' | ':') || c.is_whitespace()
    })
    .to_string()
}

#[derive(Clone, Copy, PartialEq)]
enum Class {
    Upper,
    Lower,
    Digit,
    Other,
}

fn class(c: char) -> Class {
    if c.is_uppercase() {
        Class::Upper
    } else if c.is_lowercase() || (c.is_alphabetic()) {
        Class::Lower
    } else if c.is_numeric() {
        Class::Digit
    } else {
        Class::Other
    }
}

/// Splits an identifier at lower→upper, acronym→word and letter↔digit
/// boundaries. Concatenating the parts gives back `token`.
pub fn split_subtokens(token: &str) -> Vec<String> {
    let chars: Vec<char> = token.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..chars.len() {
        let (a, b) = (class(chars[i - 1]), class(chars[i]));
        let letter = |c: Class| matches!(c, Class::Upper | Class::Lower);
        let boundary = (a == Class::Lower && b == Class::Upper)
            || (a == Class::Digit && letter(b))
            || (letter(a) && b == Class::Digit)
            || (a == Class::Upper
                && b == Class::Upper
                && chars.get(i + 1).is_some_and(|&n| class(n) == Class::Lower));
        if boundary {
            out.push(chars[start..i].iter().collect());
            start = i;
        }
    }
    if start < chars.len() {
        out.push(chars[start..].iter().collect());
    }
    out
}

/// Word/punctuation tokenization that keeps `<version>` whole.
pub fn tokenize_message(text: &str) -> Vec<String> {
    WORD_PUNCT
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .collect()
}

/// Plain word/punctuation tokenization: runs of word characters and runs of
/// other non-space characters.
pub(crate) fn word_punct(text: &str) -> impl Iterator<Item = &str> {
    static PLAIN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+|[^\w\s]+").unwrap());
    PLAIN.find_iter(text).map(|m| m.as_str())
}
