//! Lexicon-based coarse part-of-speech tagging and the verb-start filter.

use std::collections::{HashMap, HashSet};
use std::sync::LazyLock;

use thiserror::Error;

const BUNDLED: &str = include_str!("../../data/lexicon.tsv");

static DEFAULT: LazyLock<PosLexicon> =
    LazyLock::new(|| PosLexicon::parse(BUNDLED).expect("bundled lexicon parses"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Verb,
    Noun,
    Other,
}

#[derive(Debug, Error, PartialEq)]
#[error("lexicon line {line}: {message}")]
pub struct LexiconError {
    pub line: usize,
    pub message: String,
}

/// Word → tag table.
///
/// File format: one `token<TAB>TAG` per line with `TAG` one of `VERB`,
/// `NOUN`, `OTHER`; blank lines and lines starting with `#` are skipped. The
/// first line for a token fixes its tag. A later `VERB` line for a token whose
/// tag is not `VERB` marks it as an ambiguous verb: it is tagged `VERB` when
/// it directly follows the pronoun `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosLexicon {
    tags: HashMap<String, Tag>,
    ambiguous: HashSet<String>,
}

impl PosLexicon {
    pub fn bundled() -> &'static PosLexicon {
        &DEFAULT
    }

    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut tags = HashMap::new();
        let mut ambiguous = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| LexiconError {
                line: i + 1,
                message: message.to_string(),
            };
            let (token, tag) = line
                .split_once('\t')
                .ok_or_else(|| err("expected token<TAB>TAG"))?;
            let tag = match tag.trim() {
                "VERB" => Tag::Verb,
                "NOUN" => Tag::Noun,
                "OTHER" => Tag::Other,
                other => return Err(err(&format!("unknown tag {other:?}"))),
            };
            let token = token.trim().to_lowercase();
            if token.is_empty() || token.contains(char::is_whitespace) {
                return Err(err("token must be a single word"));
            }
            match tags.get(&token) {
                None => {
                    tags.insert(token, tag);
                }
                Some(&first) if first != Tag::Verb && tag == Tag::Verb => {
                    ambiguous.insert(token);
                }
                Some(_) => {}
            }
        }
        Ok(PosLexicon { tags, ambiguous })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        Ok(Self::parse(&std::fs::read_to_string(path)?)?)
    }

    /// Context-free tag; unknown tokens are `Other`.
    pub fn tag(&self, token: &str) -> Tag {
        self.tags.get(token).copied().unwrap_or(Tag::Other)
    }

    pub fn is_ambiguous_verb(&self, token: &str) -> bool {
        self.ambiguous.contains(token)
    }

    /// Tokens whose primary tag is `Verb`.
    pub fn verb_set(&self) -> HashSet<&str> {
        self.tags
            .iter()
            .filter(|(_, &t)| t == Tag::Verb)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    /// Tags a sequence, applying the ambiguous-verb rule after `i`.
    pub fn tag_sequence<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Tag> {
        let mut out = Vec::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            let t = t.as_ref();
            let mut tag = self.tag(t);
            if tag != Tag::Verb
                && i > 0
                && tokens[i - 1].as_ref() == "i"
                && self.is_ambiguous_verb(t)
            {
                tag = Tag::Verb;
            }
            out.push(tag);
        }
        out
    }

    /// Accepts a message whose first token is a verb, either directly or
    /// once the pronoun `i` is prepended.
    pub fn starts_with_verb<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        let Some(first) = tokens.first() else {
            return false;
        };
        if self.tag(first.as_ref()) == Tag::Verb {
            return true;
        }
        let mut with_pronoun: Vec<&str> = Vec::with_capacity(tokens.len() + 1);
        with_pronoun.push("i");
        with_pronoun.extend(tokens.iter().map(AsRef::as_ref));
        self.tag_sequence(&with_pronoun)[1] == Tag::Verb
    }
}
