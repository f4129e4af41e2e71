use std::path::Path;
use std::process::Command;

use super::{CorpusError, RawCommit};

fn git(repo: &Path, args: &[&str]) -> Result<String, CorpusError> {
    let out = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(["-c", "core.quotepath=off"])
        .args(args)
        .output()
        .map_err(|e| CorpusError::Git(format!("cannot run git: {e}")))?;
    if !out.status.success() {
        return Err(CorpusError::Git(
            String::from_utf8_lossy(&out.stderr).trim().to_string(),
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn repo_name(path: &Path) -> String {
    let abs = path.canonicalize().unwrap_or_else(|_| path.to_path_buf());
    abs.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Commits reachable from `HEAD`, newest first, at most `cap`. Root commits
/// are returned with `parent_count == 0` and their full diff; merges carry the
/// diff against their first parent. Invalid UTF-8 is replaced with U+FFFD.
pub fn read_git_repo(path: &Path, cap: usize) -> Result<Vec<RawCommit>, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such repository"),
        });
    }
    if cap == 0 {
        return Ok(Vec::new());
    }
    let repo = repo_name(path);
    let log = git(
        path,
        &[
            "log",
            "--format=%H%x00%P%x00%B%x1e",
            "-n",
            &cap.to_string(),
            "HEAD",
        ],
    )?;
    let mut out = Vec::new();
    for record in log.split('\x1e') {
        let record = record.trim_start_matches('\n');
        if record.is_empty() {
            continue;
        }
        let mut fields = record.splitn(3, '\0');
        let (Some(sha), Some(parents), Some(body)) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(CorpusError::Git(format!(
                "unexpected log record {record:?}"
            )));
        };
        let parents: Vec<&str> = parents.split_whitespace().collect();
        let diff = match parents.first() {
            Some(first) => git(
                path,
                &[
                    "diff",
                    "--no-color",
                    "--no-ext-diff",
                    "--src-prefix=a/",
                    "--dst-prefix=b/",
                    first,
                    sha,
                ],
            )?,
            None => git(
                path,
                &[
                    "diff-tree",
                    "-p",
                    "--root",
                    "--no-commit-id",
                    "--no-color",
                    "--src-prefix=a/",
                    "--dst-prefix=b/",
                    sha,
                ],
            )?,
        };
        out.push(RawCommit {
            repo: repo.clone(),
            sha: sha.to_string(),
            message: body.trim_end().to_string(),
            diff,
            parent_count: parents.len() as u32,
        });
    }
    Ok(out)
}
