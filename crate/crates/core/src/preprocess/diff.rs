//! Unified diff parsing and code tokenization.

use thiserror::Error;

use super::message::split_subtokens;

/// One file block of a unified diff.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileDiff {
    /// Basename of the post-image path (pre-image for deletions).
    pub filename: String,
    /// Hunk header trailers (enclosing method or class), one per hunk, joined
    /// by a space.
    pub change_context: Option<String>,
    pub added_lines: Vec<String>,
    pub removed_lines: Vec<String>,
}

impl FileDiff {
    pub fn lines_changed(&self) -> usize {
        self.added_lines.len() + self.removed_lines.len()
    }

    /// Lowercased text after the last `.` of the filename, if any.
    pub fn extension(&self) -> Option<String> {
        self.filename
            .rsplit_once('.')
            .filter(|(stem, ext)| !stem.is_empty() && !ext.is_empty())
            .map(|(_, ext)| ext.to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DiffParseError {
    #[error("truncated hunk starting at byte {offset}: {missing_old} old and {missing_new} new lines missing")]
    TruncatedHunk {
        offset: usize,
        missing_old: usize,
        missing_new: usize,
    },
    #[error("malformed hunk header at byte {offset}")]
    BadHunkHeader { offset: usize },
}

struct Line<'a> {
    offset: usize,
    text: &'a str,
}

fn lines_with_offsets(raw: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for piece in raw.split_inclusive('\n') {
        let text = piece.strip_suffix('\n').unwrap_or(piece);
        let text = text.strip_suffix('\r').unwrap_or(text);
        out.push(Line { offset, text });
        offset += piece.len();
    }
    out
}

fn basename(path: &str) -> String {
    let path = path.trim().trim_matches('"');
    path.rsplit('/').next().unwrap_or(path).to_string()
}

fn strip_side(path: &str, prefix: &str) -> Option<String> {
    let path = path.split('\t').next().unwrap_or(path).trim();
    if path == "/dev/null" {
        return None;
    }
    Some(basename(path.strip_prefix(prefix).unwrap_or(path)))
}

/// `(old_count, new_count, trailer)` of `@@ -a[,b] +c[,d] @@ trailer`.
fn parse_hunk_header(line: &str) -> Option<(usize, usize, &str)> {
    let rest = line.strip_prefix("@@ ")?;
    let (ranges, trailer) = rest.split_once("@@")?;
    let mut parts = ranges.split_whitespace();
    let count = |spec: &str, sigil: char| -> Option<usize> {
        let spec = spec.strip_prefix(sigil)?;
        match spec.split_once(',') {
            Some((start, n)) => {
                start.parse::<usize>().ok()?;
                n.parse().ok()
            }
            None => spec.parse::<usize>().ok().map(|_| 1),
        }
    };
    let old = count(parts.next()?, '-')?;
    let new = count(parts.next()?, '+')?;
    Some((old, new, trailer.trim()))
}

fn parse_block(lines: &[Line<'_>]) -> Result<Option<FileDiff>, DiffParseError> {
    let header = lines[0].text.strip_prefix("diff --git ").unwrap_or("");
    // Fallback when there are no ---/+++ lines (mode changes, binaries).
    let mut filename = header
        .rsplit_once(" b/")
        .map(|(_, b)| basename(b))
        .unwrap_or_default();
    let mut pre_image: Option<String> = None;
    let mut contexts = Vec::new();
    let mut added = Vec::new();
    let mut removed = Vec::new();

    let mut i = 1;
    while i < lines.len() {
        let line = &lines[i];
        if let Some(rest) = line.text.strip_prefix("--- ") {
            pre_image = strip_side(rest, "a/");
            i += 1;
            continue;
        }
        if let Some(rest) = line.text.strip_prefix("+++ ") {
            match strip_side(rest, "b/") {
                Some(name) => filename = name,
                None => {
                    if let Some(name) = pre_image.clone() {
                        filename = name;
                    }
                }
            }
            i += 1;
            continue;
        }
        if line.text.starts_with("@@") {
            let (mut old, mut new, trailer) =
                parse_hunk_header(line.text).ok_or(DiffParseError::BadHunkHeader {
                    offset: line.offset,
                })?;
            if !trailer.is_empty() {
                contexts.push(trailer.to_string());
            }
            let start = line.offset;
            i += 1;
            while (old > 0 || new > 0) && i < lines.len() {
                let body = lines[i].text;
                match body.as_bytes().first() {
                    Some(b'+') if new > 0 => {
                        added.push(body[1..].to_string());
                        new -= 1;
                    }
                    Some(b'-') if old > 0 => {
                        removed.push(body[1..].to_string());
                        old -= 1;
                    }
                    Some(b'\\') => {}
                    Some(b' ') | None if old > 0 && new > 0 => {
                        old -= 1;
                        new -= 1;
                    }
                    _ => break,
                }
                i += 1;
            }
            // A trailing "\ No newline at end of file" belongs to this hunk.
            while i < lines.len() && lines[i].text.starts_with('\\') {
                i += 1;
            }
            if old > 0 || new > 0 {
                return Err(DiffParseError::TruncatedHunk {
                    offset: start,
                    missing_old: old,
                    missing_new: new,
                });
            }
            continue;
        }
        i += 1;
    }
    if added.is_empty() && removed.is_empty() {
        return Ok(None);
    }
    Ok(Some(FileDiff {
        filename,
        change_context: (!contexts.is_empty()).then(|| contexts.join(" ")),
        added_lines: added,
        removed_lines: removed,
    }))
}

fn blocks<'a>(lines: &'a [Line<'a>]) -> impl Iterator<Item = &'a [Line<'a>]> {
    let starts: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.text.starts_with("diff --git "))
        .map(|(i, _)| i)
        .collect();
    let ends: Vec<usize> = starts
        .iter()
        .skip(1)
        .copied()
        .chain(std::iter::once(lines.len()))
        .collect();
    starts.into_iter().zip(ends).map(move |(s, e)| &lines[s..e])
}

/// One [`FileDiff`] per `diff --git` block that adds or removes at least one
/// line. Text without any block yields an empty list.
pub fn parse_diff(raw: &str) -> Result<Vec<FileDiff>, DiffParseError> {
    let lines = lines_with_offsets(raw);
    let mut out = Vec::new();
    for block in blocks(&lines) {
        if let Some(f) = parse_block(block)? {
            out.push(f);
        }
    }
    Ok(out)
}

/// Like [`parse_diff`] but malformed blocks are skipped.
pub fn parse_diff_lenient(raw: &str) -> Vec<FileDiff> {
    let lines = lines_with_offsets(raw);
    blocks(&lines)
        .filter_map(|b| parse_block(b).ok().flatten())
        .collect()
}

/// Multi-character operators and comment markers kept as single tokens,
/// longest first so matching is maximal munch.
const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "===", "!==", "->", "=>", "::", "++", "--", "&&", "||",
    "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>", "//", "/*",
    "*/", "??", "?.",
];

/// Splits code into identifier/number runs, the operators above, and single
/// punctuation characters. Whitespace only separates.
pub fn tokenize_code(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = line;
    while let Some(c) = rest.chars().next() {
        if c.is_whitespace() {
            rest = &rest[c.len_utf8()..];
            continue;
        }
        if c.is_alphanumeric() || c == '_' {
            let end = rest
                .char_indices()
                .find(|&(_, ch)| !(ch.is_alphanumeric() || ch == '_'))
                .map_or(rest.len(), |(i, _)| i);
            out.push(rest[..end].to_string());
            rest = &rest[end..];
            continue;
        }
        let len = OPERATORS
            .iter()
            .find(|op| rest.starts_with(*op))
            .map_or(c.len_utf8(), |op| op.len());
        out.push(rest[..len].to_string());
        rest = &rest[len..];
    }
    out
}

/// Sub-token split, lowercase, and drop everything outside printable ASCII.
pub(crate) fn normalize_code_tokens(raw: Vec<String>) -> Vec<String> {
    raw.into_iter()
        .flat_map(|t| split_subtokens(&t))
        .filter_map(|t| {
            let t: String = t
                .chars()
                .filter(|c| ('!'..='~').contains(c))
                .collect::<String>()
                .to_ascii_lowercase();
            (!t.is_empty()).then_some(t)
        })
        .collect()
}

/// Whitelisted files, most changed lines first; per file the filename and
/// context tokens, then each removed line as `-` plus its tokens, then each
/// added line as `+` plus its tokens. An empty whitelist keeps every file.
pub fn clean_and_tokenize_diff(files: &[FileDiff], extension_whitelist: &[String]) -> Vec<String> {
    let mut kept: Vec<&FileDiff> = files
        .iter()
        .filter(|f| {
            extension_whitelist.is_empty()
                || f.extension().is_some_and(|e| {
                    extension_whitelist
                        .iter()
                        .any(|w| w.eq_ignore_ascii_case(&e))
                })
        })
        .collect();
    kept.sort_by_key(|f| std::cmp::Reverse(f.lines_changed()));
    let mut out = Vec::new();
    for f in kept {
        out.extend(normalize_code_tokens(tokenize_code(&f.filename)));
        if let Some(ctx) = &f.change_context {
            out.extend(normalize_code_tokens(tokenize_code(ctx)));
        }
        for (sigil, lines) in [("-", &f.removed_lines), ("+", &f.added_lines)] {
            for line in lines {
                let toks = normalize_code_tokens(tokenize_code(line));
                if !toks.is_empty() {
                    out.push(sigil.to_string());
                    out.extend(toks);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "diff --git a/src/A.java b/src/A.java\n\
index 83db48f..bf269f4 100644\n\
--- a/src/A.java\n\
+++ b/src/A.java\n\
@@ -1,1 +1,1 @@ class A\n\
-old\n\
+new\n";

    #[test]
    fn minimal_block() {
        let files = parse_diff(MINIMAL).unwrap();
        assert_eq!(
            files,
            vec![FileDiff {
                filename: "A.java".into(),
                change_context: Some("class A".into()),
                added_lines: vec!["new".into()],
                removed_lines: vec!["old".into()],
            }]
        );
        assert_eq!(files[0].lines_changed(), 2);
        assert_eq!(files[0].extension().as_deref(), Some("java"));
    }

    #[test]
    fn mode_only_and_empty_inputs() {
        let mode = "diff --git a/run.sh b/run.sh\nold mode 100644\nnew mode 100755\n";
        assert!(parse_diff(mode).unwrap().is_empty());
        assert!(parse_diff("").unwrap().is_empty());
        assert!(parse_diff("just some text\n").unwrap().is_empty());
    }

    #[test]
    fn deletions_use_pre_image_and_counts_guard_dashes() {
        let raw = [
            "diff --git a/lib/Gone.java b/lib/Gone.java",
            "deleted file mode 100644",
            "--- a/lib/Gone.java",
            "+++ /dev/null",
            "@@ -1,3 +0,0 @@",
            "--- not a header",
            "-x",
            "-",
            "diff --git a/B.java b/B.java",
            "--- a/B.java",
            "+++ b/B.java",
            "@@ -5,3 +5,4 @@ void run()",
            " a",
            "",
            "+b",
            " c",
            "@@ -20 +21 @@ class B",
            "-p",
            "+q",
            "\\ No newline at end of file",
        ]
        .join("\n");
        let raw = raw.as_str();
        let files = parse_diff(raw).unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(files[0].filename, "Gone.java");
        assert_eq!(files[0].removed_lines, vec!["-- not a header", "x", ""]);
        assert!(files[0].added_lines.is_empty());
        assert_eq!(files[0].change_context, None);
        assert_eq!(files[1].filename, "B.java");
        assert_eq!(files[1].added_lines, vec!["b", "q"]);
        assert_eq!(files[1].removed_lines, vec!["p"]);
        assert_eq!(
            files[1].change_context.as_deref(),
            Some("void run() class B")
        );
    }

    #[test]
    fn truncated_hunk_reports_offset() {
        let raw = format!("{MINIMAL}diff --git a/C.java b/C.java\n--- a/C.java\n+++ b/C.java\n@@ -1,2 +1,2 @@\n-x\n");
        let offset = raw.find("@@ -1,2").unwrap();
        assert_eq!(
            parse_diff(&raw),
            Err(DiffParseError::TruncatedHunk {
                offset,
                missing_old: 1,
                missing_new: 2
            })
        );
        let lenient = parse_diff_lenient(&raw);
        assert_eq!(lenient.len(), 1);
        assert_eq!(lenient[0].filename, "A.java");
        let bad = "diff --git a/x b/x\n@@ nonsense @@\n";
        assert_eq!(
            parse_diff(bad),
            Err(DiffParseError::BadHunkHeader { offset: 19 })
        );
    }

    #[test]
    fn code_tokenizer_keeps_operators() {
        assert_eq!(
            tokenize_code("++x; // done"),
            vec!["++", "x", ";", "//", "done"]
        );
        assert_eq!(
            tokenize_code("/* a */ i-- >= b->c"),
            vec!["/*", "a", "*/", "i", "--", ">=", "b", "->", "c"]
        );
        assert_eq!(tokenize_code("  "), Vec::<String>::new());
    }

    fn file(name: &str, added: usize, removed: usize) -> FileDiff {
        FileDiff {
            filename: name.into(),
            change_context: None,
            added_lines: (0..added).map(|i| format!("a{i}")).collect(),
            removed_lines: (0..removed).map(|i| format!("r{i}")).collect(),
        }
    }

    #[test]
    fn clean_and_tokenize_orders_and_filters() {
        let java = vec!["java".to_string()];
        let files = vec![
            file("Small.java", 1, 0),
            file("Big.java", 2, 1),
            file("Foo.cs", 5, 5),
        ];
        let toks = clean_and_tokenize_diff(&files, &java);
        assert_eq!(
            toks,
            vec![
                "big", ".", "java", "-", "r", "0", "+", "a", "0", "+", "a", "1", "small", ".",
                "java", "+", "a", "0"
            ]
        );
        let all = clean_and_tokenize_diff(&files, &[]);
        assert_eq!(&all[..3], &["foo", ".", "cs"]);
        let mut f = file("getHTTPValue.java", 0, 0);
        f.added_lines.push("int x = 1; ++x; // Ünïcode".into());
        f.change_context = Some("public void setUp()".into());
        assert_eq!(
            clean_and_tokenize_diff(&[f], &java),
            vec![
                "get", "http", "value", ".", "java", "public", "void", "set", "up", "(", ")", "+",
                "int", "x", "=", "1", ";", "++", "x", ";", "//", "ncode"
            ]
        );
    }

    proptest! {
        #[test]
        fn tokens_never_contain_whitespace(s in "\\PC{0,80}") {
            for t in tokenize_code(&s) {
                prop_assert!(!t.is_empty() && !t.contains(char::is_whitespace));
            }
            for t in normalize_code_tokens(tokenize_code(&s)) {
                prop_assert!(!t.is_empty() && t.chars().all(|c| ('!'..='~').contains(&c)));
            }
        }

        #[test]
        fn operators_survive(ops in proptest::collection::vec(prop_oneof![Just("++"), Just("--"), Just("//"), Just("/*"), Just("*/")], 1..6)) {
            let line = ops.join(" x ");
            let toks = tokenize_code(&line);
            let kept: Vec<&str> = toks.iter().map(String::as_str).filter(|t| *t != "x").collect();
            prop_assert_eq!(kept, ops);
        }

        #[test]
        fn parser_never_panics(s in "(diff --git a/x b/x\n|@@ -1,2 \\+1 @@\n|[-+ ]?[a-z]{0,3}\n){0,12}") {
            let strict = parse_diff(&s);
            let lenient = parse_diff_lenient(&s);
            if let Ok(files) = strict {
                prop_assert_eq!(files, lenient.clone());
            }
            for f in lenient {
                prop_assert!(f.lines_changed() >= 1);
            }
        }
    }
}
