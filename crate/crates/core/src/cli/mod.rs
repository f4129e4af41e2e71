//! `commitgen` subcommands.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! data errors (unreadable or malformed inputs, failed training, ...).

mod config;
mod pattern;

pub use config::{NngenConfig, RunConfig, VocabConfig};
pub use pattern::{count_pattern, matches_pattern, WILDCARD};

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::baseline::{build_index, nngen_generate};
use crate::corpus::{
    corpus_stats, filter_commit, read_corpus, render_histogram_svg, sample_and_split, CorpusError,
    CorpusFormat, FilterDecision, JsonlCommits,
};
use crate::metrics::{evaluate, MetricSet};
use crate::preprocess::{Mode, Preprocessor, ProcessedExample, Rejection, VerbFilter};
use crate::seq2seq::{render_heatmap_svg, Seq2Seq};
use crate::trainer::{
    encode_pairs, load_checkpoint, resolve_checkpoint_dir, train_with, CheckpointSink,
    VocabFingerprints,
};
use crate::vocab::{build_vocab, Side, Vocabulary, EOS, SOS, SPECIALS};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_errors!(
    std::io::Error,
    serde_json::Error,
    CorpusError,
    crate::preprocess::PipelineError,
    crate::vocab::VocabError,
    crate::seq2seq::ModelError,
    crate::trainer::TrainError,
    crate::trainer::CheckpointError,
    crate::metrics::MetricsError,
    crate::baseline::BaselineError
);

pub const SRC_VOCAB_FILE: &str = "src_vocab.json";
pub const TGT_VOCAB_FILE: &str = "tgt_vocab.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const VALID_FILE: &str = "valid.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "commitgen",
    version,
    about = "Generate commit messages from diffs",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load_or_default(self.config.as_deref())?;
        cfg.apply_seed(self.seed);
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PipelineArg {
    Reference,
    Rigorous,
}

impl From<PipelineArg> for Mode {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::Reference => Mode::Reference,
            PipelineArg::Rigorous => Mode::Rigorous,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read commits from git repositories (directories) or JSONL archives and
    /// keep those passing the commit filters.
    Ingest {
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Clean and tokenize raw commits; rejections go to `<out>.rejects.jsonl`.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        pipeline: Option<PipelineArg>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample and split a JSONL file into train/valid/test files in `--out`.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        /// Train, validation and test fractions, e.g. `0.8,0.1,0.1`.
        #[arg(long)]
        ratios: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Build source and target vocabularies from processed examples.
    Vocab {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train on `<in>/train.jsonl`, validating on `<in>/valid.jsonl`.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Greedy-decode a message for every example.
    Generate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "max-len")]
        max_len: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Nearest-neighbour baseline: index `<in>/train.jsonl`, answer `<in>/test.jsonl`.
    Nngen {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Score hypotheses against references.
    Evaluate {
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        /// Subset of `bleu,rouge,meteor`.
        #[arg(long)]
        metrics: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Length statistics of processed examples.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// SVG histogram of source lengths.
        #[arg(long = "hist-out")]
        hist_out: Option<PathBuf>,
        /// Report the fraction of messages matching a template, `<*>` being
        /// one or more tokens.
        #[arg(long)]
        pattern: Option<String>,
    },
    /// Attention weights of one generated message as JSON plus an SVG heatmap
    /// next to it.
    Attention {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Index of the example in `--in`.
        #[arg(long, default_value_t = 0)]
        n: usize,
        #[arg(long = "max-len")]
        max_len: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(
        argv,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    )
}

pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Ingest { input, out, common } => {
            ingest(&input, &out, &common.load()?, stdout, stderr)
        }
        Command::Preprocess {
            input,
            out,
            pipeline,
            common,
        } => preprocess(
            &input,
            &out,
            pipeline.map(Mode::from),
            &common.load()?,
            stdout,
            stderr,
        ),
        Command::Split {
            input,
            out,
            n,
            ratios,
            common,
        } => {
            let mut cfg = common.load()?;
            if let Some(n) = n {
                cfg.split.sample_size = n;
            }
            if let Some(r) = ratios {
                cfg.split.ratios = parse_ratios(&r)?;
            }
            split(&input, &out, &cfg, stdout)
        }
        Command::Vocab { input, out, common } => vocab(&input, &out, &common.load()?, stdout),
        Command::Train { input, out, common } => {
            train(&input, &out, &common.load()?, stdout, stderr)
        }
        Command::Generate {
            input,
            out,
            checkpoint,
            max_len,
            common,
        } => {
            common.load()?;
            generate(&input, &out, &checkpoint, max_len, stdout)
        }
        Command::Nngen {
            input,
            out,
            k,
            common,
        } => {
            let cfg = common.load()?;
            nngen(&input, &out, k.unwrap_or(cfg.nngen.k), stdout)
        }
        Command::Evaluate {
            refs,
            hyps,
            metrics,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let set = match metrics {
                Some(m) => m.parse::<MetricSet>().map_err(CliError::Usage)?,
                None => MetricSet::default(),
            };
            let report = evaluate(&refs, &hyps, &cfg.eval)?;
            let text = report.to_json(set).to_string();
            if let Some(path) = out {
                write_file(&path, &format!("{text}\n"))?;
            }
            writeln!(stdout, "{text}")?;
            Ok(())
        }
        Command::Stats {
            input,
            out,
            hist_out,
            pattern,
        } => stats(
            &input,
            out.as_deref(),
            hist_out.as_deref(),
            pattern.as_deref(),
            stdout,
        ),
        Command::Attention {
            input,
            out,
            checkpoint,
            n,
            max_len,
            common,
        } => {
            common.load()?;
            attention(&input, &out, &checkpoint, n, max_len, stdout)
        }
    }
}

fn parse_ratios(s: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--ratios {s:?}: expected three numbers")))?;
    parts
        .try_into()
        .map_err(|_| CliError::Usage(format!("--ratios {s:?}: expected three numbers")))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let f = File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Non-blank lines of a text file.
fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let mut out = Vec::new();
    for line in BufReader::new(open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn write_jsonl<T: Serialize>(w: &mut impl Write, item: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *w, item)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn ingest(
    inputs: &[PathBuf],
    out: &Path,
    cfg: &RunConfig,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    cfg.filter
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut w = create(out)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut per_repo: HashMap<String, usize> = HashMap::new();
    for path in inputs {
        let format = if path.is_dir() {
            CorpusFormat::GitRepo
        } else {
            CorpusFormat::Jsonl
        };
        for rec in read_corpus(path, format, cfg.filter.per_repo_cap)? {
            let c = match rec {
                Ok(c) => c,
                Err(e @ CorpusError::Record { .. }) => {
                    writeln!(stderr, "warning: {}: {e}", path.display())?;
                    *counts.entry("malformed").or_default() += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            // The cap counts commits read per repository, kept or not.
            let seen = per_repo.entry(c.repo.clone()).or_default();
            if *seen >= cfg.filter.per_repo_cap {
                *counts.entry("repo-cap").or_default() += 1;
                continue;
            }
            *seen += 1;
            let decision = filter_commit(&c, &cfg.filter);
            *counts.entry(decision.as_str()).or_default() += 1;
            if decision == FilterDecision::Keep {
                write_jsonl(&mut w, &c)?;
            }
        }
    }
    w.flush()?;
    writeln!(stdout, "{}", serde_json::to_string(&counts)?)?;
    Ok(())
}

/// `processed.jsonl` → `processed.rejects.jsonl`.
pub fn rejects_path(out: &Path) -> PathBuf {
    out.with_extension("rejects.jsonl")
}

fn preprocess(
    input: &Path,
    out: &Path,
    mode: Option<Mode>,
    cfg: &RunConfig,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let pipeline = cfg.resolved_pipeline(mode);
    let mut pre =
        Preprocessor::new(pipeline.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut commits = Vec::new();
    for rec in JsonlCommits::open(input)? {
        match rec {
            Ok(c) => commits.push(c),
            Err(e) => writeln!(stderr, "warning: {}: {e}", input.display())?,
        }
    }
    if pipeline.verb_filter == VerbFilter::VdoApprox {
        pre.fit(&commits);
    }
    let mut kept = create(out)?;
    let mut rejected = create(&rejects_path(out))?;
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    let mut n_kept = 0usize;
    for c in &commits {
        match pre.process(c) {
            Ok(ex) => {
                write_jsonl(&mut kept, &ex)?;
                n_kept += 1;
            }
            Err(reason) => {
                *reasons.entry(reason.as_str()).or_default() += 1;
                write_jsonl(
                    &mut rejected,
                    &Rejection {
                        sha: c.sha.clone(),
                        reason,
                    },
                )?;
            }
        }
    }
    kept.flush()?;
    rejected.flush()?;
    writeln!(stdout, "{}", json!({"kept": n_kept, "rejected": reasons}))?;
    Ok(())
}

fn split(
    input: &Path,
    out: &Path,
    cfg: &RunConfig,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    cfg.split
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let lines = read_lines(input)?;
    let s = sample_and_split(lines.len(), &cfg.split)?;
    for (name, idx) in [
        (TRAIN_FILE, &s.train),
        (VALID_FILE, &s.valid),
        (TEST_FILE, &s.test),
    ] {
        let mut w = create(&out.join(name))?;
        for &i in idx {
            writeln!(w, "{}", lines[i])?;
        }
        w.flush()?;
    }
    writeln!(
        stdout,
        "{}",
        json!({"train": s.train.len(), "valid": s.valid.len(), "test": s.test.len()})
    )?;
    Ok(())
}

fn build_vocabs(
    examples: &[ProcessedExample],
    cfg: &VocabConfig,
) -> Result<(Vocabulary, Vocabulary), CliError> {
    Ok((
        build_vocab(examples, Side::Source, cfg.min_freq, cfg.max_size)?,
        build_vocab(examples, Side::Target, cfg.min_freq, cfg.max_size)?,
    ))
}

fn vocab(
    input: &Path,
    out: &Path,
    cfg: &RunConfig,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let examples: Vec<ProcessedExample> = read_jsonl(input)?;
    let (src, tgt) = build_vocabs(&examples, &cfg.vocab)?;
    std::fs::create_dir_all(out)?;
    src.save(&out.join(SRC_VOCAB_FILE))?;
    tgt.save(&out.join(TGT_VOCAB_FILE))?;
    writeln!(
        stdout,
        "{}",
        json!({"source": src.len(), "target": tgt.len()})
    )?;
    Ok(())
}

/// Vocabularies stored in `dir`, or in its parent when `dir` is a checkpoint
/// subdirectory.
fn load_vocabs(dir: &Path) -> Result<Option<(Vocabulary, Vocabulary)>, CliError> {
    for d in [Some(dir), dir.parent()].into_iter().flatten() {
        let (s, t) = (d.join(SRC_VOCAB_FILE), d.join(TGT_VOCAB_FILE));
        if s.exists() && t.exists() {
            return Ok(Some((Vocabulary::load(&s)?, Vocabulary::load(&t)?)));
        }
    }
    Ok(None)
}

fn train(
    input: &Path,
    out: &Path,
    cfg: &RunConfig,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    cfg.train
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let train_ex: Vec<ProcessedExample> = read_jsonl(&input.join(TRAIN_FILE))?;
    let valid_ex: Vec<ProcessedExample> = read_jsonl(&input.join(VALID_FILE))?;
    let (src, tgt) = match load_vocabs(input)? {
        Some(v) => v,
        None => build_vocabs(&train_ex, &cfg.vocab)?,
    };
    std::fs::create_dir_all(out)?;
    src.save(&out.join(SRC_VOCAB_FILE))?;
    tgt.save(&out.join(TGT_VOCAB_FILE))?;
    write_file(
        &out.join("run_config.json"),
        &serde_json::to_string_pretty(cfg)?,
    )?;

    let mut model_cfg = cfg.model.clone();
    model_cfg.src_vocab = src.len();
    model_cfg.tgt_vocab = tgt.len();
    model_cfg
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let model = Seq2Seq::init(model_cfg, cfg.train.seed)?;
    let sink = CheckpointSink {
        dir: out.to_path_buf(),
        vocabs: VocabFingerprints {
            src: src.fingerprint(),
            tgt: tgt.fingerprint(),
        },
    };
    let train_pairs = encode_pairs(&train_ex, &src, &tgt);
    let valid_pairs = encode_pairs(&valid_ex, &src, &tgt);
    let outcome = train_with(
        model,
        &train_pairs,
        &valid_pairs,
        &cfg.train,
        Some(&sink),
        |r| {
            let _ = writeln!(
                stderr,
                "epoch {:>3}  train {:.4}  valid {:.4}  lr {:.0e}  {:.1}s",
                r.epoch, r.train_loss, r.valid_loss, r.lr, r.seconds
            );
            true
        },
    )?;
    write_file(&out.join("train_log.csv"), &outcome.log.to_csv())?;
    writeln!(
        stdout,
        "{}",
        json!({
            "epochs": outcome.log.epochs.len(),
            "best_epoch": outcome.best_epoch,
            "best_valid_loss": outcome.best_valid_loss,
            "stop": outcome.stop,
        })
    )?;
    Ok(())
}

fn load_model(checkpoint: &Path) -> Result<(Seq2Seq, Vocabulary, Vocabulary), CliError> {
    let Some((src, tgt)) = load_vocabs(checkpoint)? else {
        return Err(CliError::Data(format!(
            "{}: no {SRC_VOCAB_FILE}/{TGT_VOCAB_FILE} next to the checkpoint",
            checkpoint.display()
        )));
    };
    let expect = VocabFingerprints {
        src: src.fingerprint(),
        tgt: tgt.fingerprint(),
    };
    let (model, _) = load_checkpoint(&resolve_checkpoint_dir(checkpoint), Some(expect))?;
    Ok((model, src, tgt))
}

/// Greedy hypothesis tokens and the attention rows behind them.
fn decode_one(
    model: &Seq2Seq,
    src: &Vocabulary,
    tgt: &Vocabulary,
    ex: &ProcessedExample,
    max_len: usize,
) -> Result<(Vec<String>, Vec<usize>, crate::seq2seq::AttentionMap), CliError> {
    let ids = src.encode(&ex.source_tokens, true);
    let mask = vec![true; ids.len()];
    let (out, attn) = model.greedy_decode(&ids, &mask, max_len)?;
    Ok((tgt.decode(&out)?, ids, attn))
}

#[derive(Serialize)]
struct Hypothesis<'a> {
    sha: &'a str,
    hypothesis: &'a [String],
}

fn generate(
    input: &Path,
    out: &Path,
    checkpoint: &Path,
    max_len: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let (model, src, tgt) = load_model(checkpoint)?;
    let max_len = max_len.unwrap_or(model.config.max_decode_len);
    let examples: Vec<ProcessedExample> = read_jsonl(input)?;
    let mut w = create(out)?;
    for ex in &examples {
        let (hyp, _, _) = decode_one(&model, &src, &tgt, ex, max_len)?;
        write_jsonl(
            &mut w,
            &Hypothesis {
                sha: &ex.origin_sha,
                hypothesis: &hyp,
            },
        )?;
    }
    w.flush()?;
    writeln!(stdout, "{}", json!({"generated": examples.len()}))?;
    Ok(())
}

fn nngen(input: &Path, out: &Path, k: usize, stdout: &mut dyn Write) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let train_ex: Vec<ProcessedExample> = read_jsonl(&input.join(TRAIN_FILE))?;
    let test_ex: Vec<ProcessedExample> = read_jsonl(&input.join(TEST_FILE))?;
    let index = build_index(&train_ex)?;
    let mut w = create(out)?;
    for ex in &test_ex {
        let hyp = nngen_generate(&index, &ex.source_tokens, k)?;
        write_jsonl(
            &mut w,
            &Hypothesis {
                sha: &ex.origin_sha,
                hypothesis: hyp,
            },
        )?;
    }
    w.flush()?;
    writeln!(stdout, "{}", json!({"generated": test_ex.len(), "k": k}))?;
    Ok(())
}

fn stats(
    input: &Path,
    out: Option<&Path>,
    hist_out: Option<&Path>,
    pattern: Option<&str>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let examples: Vec<ProcessedExample> = read_jsonl(input)?;
    let s = corpus_stats(&examples);
    match out {
        Some(path) => write_file(path, &format!("{}\n", s.to_json()))?,
        None => writeln!(stdout, "{}", s.to_json())?,
    }
    if let Some(path) = hist_out {
        let svg = render_histogram_svg(&s.source_length_histogram, "Diff length", "source tokens");
        write_file(path, &svg)?;
    }
    if let Some(p) = pattern {
        let messages: Vec<&[String]> = examples
            .iter()
            .map(|e| e.target_tokens.as_slice())
            .collect();
        let messages: Vec<Vec<&str>> = messages
            .iter()
            .map(|m| m.iter().map(String::as_str).collect())
            .collect();
        let fraction = count_pattern(&messages, p)?;
        writeln!(stdout, "{}", json!({"pattern": p, "fraction": fraction}))?;
    }
    Ok(())
}

fn attention(
    input: &Path,
    out: &Path,
    checkpoint: &Path,
    n: usize,
    max_len: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let (model, src, tgt) = load_model(checkpoint)?;
    let examples: Vec<ProcessedExample> = read_jsonl(input)?;
    let ex = examples.get(n).ok_or_else(|| {
        CliError::Data(format!(
            "--n {n}: {} has {} examples",
            input.display(),
            examples.len()
        ))
    })?;
    let max_len = max_len.unwrap_or(model.config.max_decode_len);
    let (hyp, ids, attn) = decode_one(&model, &src, &tgt, ex, max_len)?;
    // Column labels follow the encoded source, markers included, so every
    // row still sums to one.
    let mut labels = vec![SPECIALS[SOS].to_string()];
    labels.extend(ex.source_tokens.iter().cloned());
    labels.push(SPECIALS[EOS].to_string());
    debug_assert_eq!(labels.len(), ids.len());
    let dump = attn.to_dump(&labels, &hyp);
    write_file(out, &serde_json::to_string_pretty(&dump)?)?;
    write_file(&out.with_extension("svg"), &render_heatmap_svg(&dump))?;
    writeln!(
        stdout,
        "{}",
        json!({"sha": ex.origin_sha, "hypothesis": hyp})
    )?;
    Ok(())
}
