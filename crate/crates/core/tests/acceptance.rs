//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.
//!
//! Run a subset with `cargo test --test acceptance -- 2 3`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use commitgen::baseline::{build_index, nngen_generate, DEFAULT_K};
use commitgen::cli::{matches_pattern, run_with};
use commitgen::corpus::{corpus_stats, render_histogram_svg, JsonlCommits, RawCommit};
use commitgen::metrics::{bleu_corpus, rouge_l, rouge_n};
use commitgen::preprocess::{PipelineConfig, Preprocessor, ProcessedExample, Rejection};
use commitgen::seq2seq::{Batch, ForwardOptions, ModelConfig, Seq2Seq};
use commitgen::trainer::{
    encode_pairs, evaluate_loss, load_checkpoint, save_checkpoint, train_with, CheckpointError,
    EncodedPair, Scheduler, TrainConfig, VocabFingerprints,
};
use commitgen::vocab::{build_vocab, Side, Vocabulary, EOS, PAD, SOS};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/golden")
        .join(name)
}

// 1 ─────────────────────────────────────────────────────────────────────────

fn gradient_soundness() -> Outcome {
    let started = Instant::now();
    let cfg = ModelConfig {
        src_vocab: 20,
        tgt_vocab: 20,
        hidden_dim: 8,
        embed_dim: 6,
        embed_dropout: 0.1,
        max_decode_len: 10,
    };
    let mut model = Seq2Seq::init(cfg, 11).unwrap();
    // Evaluated at 8× the init scale: at ±0.08 the attention-query gradient
    // sits near 1e-10, under the finite-difference noise floor.
    for t in model.params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= 8.0);
    }
    let mut batch = Batch::from_pairs(&[
        (vec![SOS, 4, 5, 6, EOS], vec![SOS, 7, 8, EOS]),
        (vec![SOS, 9, 12, EOS], vec![SOS, 10, EOS]),
    ]);
    batch.src_ids[1].resize(5, PAD);
    assert_eq!((batch.len(), batch.src_len(), batch.tgt_len()), (2, 5, 4));

    let eps = 1e-5;
    let mut worst = (0.0f64, String::new());
    let modes = [
        ForwardOptions::eval(),
        ForwardOptions {
            teacher_forcing_p: 0.5,
            seed: 3,
            train: true,
        },
    ];
    for opts in &modes {
        let (_, grads) = model.loss_and_grads(&batch, opts).unwrap();
        let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
        let mut probe = model.clone();
        for (b, name) in names.iter().enumerate() {
            let analytic = &grads.blocks[b];
            let mut numeric = vec![0.0; analytic.len()];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let orig = probe.params.tensors_mut()[b].data()[i];
                probe.params.tensors_mut()[b].data_mut()[i] = orig + eps;
                let up = probe.forward_loss(&batch, opts).unwrap();
                probe.params.tensors_mut()[b].data_mut()[i] = orig - eps;
                let down = probe.forward_loss(&batch, opts).unwrap();
                probe.params.tensors_mut()[b].data_mut()[i] = orig;
                *slot = (up - down) / (2.0 * eps);
            }
            let scale = analytic
                .iter()
                .chain(&numeric)
                .fold(0.0f64, |a, &v| a.max(v.abs()));
            let err = analytic
                .iter()
                .zip(&numeric)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            let rel = if scale == 0.0 { 0.0 } else { err / scale };
            if rel >= worst.0 {
                worst = (rel, name.clone());
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst.0 < 1e-4 && secs < 60.0,
        format!(
            "max block relative error {:.2e} ({}), {secs:.1}s",
            worst.0, worst.1
        ),
    )
}

// 2 ─────────────────────────────────────────────────────────────────────────

fn decode_all(model: &Seq2Seq, pairs: &[EncodedPair], max_len: usize) -> Vec<Vec<usize>> {
    pairs
        .iter()
        .map(|p| {
            model
                .greedy_decode(&p.src, &vec![true; p.src.len()], max_len)
                .unwrap()
                .0
        })
        .collect()
}

fn id_bleu(pairs: &[EncodedPair], hyps: &[Vec<usize>]) -> f64 {
    let corpus: Vec<(Vec<String>, Vec<String>)> = pairs
        .iter()
        .zip(hyps)
        .map(|(p, h)| {
            let gold = &p.tgt[1..p.tgt.len() - 1];
            (
                gold.iter().map(usize::to_string).collect(),
                h.iter().map(usize::to_string).collect(),
            )
        })
        .collect();
    bleu_corpus(&corpus, 4)
}

fn ex(source: Vec<String>, target: Vec<String>) -> ProcessedExample {
    ProcessedExample {
        origin_sha: String::new(),
        source_tokens: source,
        target_tokens: target,
    }
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// "- old();  + new();" diffs described by "replace old with new".
fn overfit_corpus() -> Vec<ProcessedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fns: Vec<String> = (0..16).map(|i| format!("fn{i}")).collect();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    while out.len() < 32 {
        let (a, b) = (rng.gen_range(0..16), rng.gen_range(0..16));
        if a == b || !seen.insert((a, b)) {
            continue;
        }
        let src = [
            vec![
                "-".to_string(),
                fns[a].clone(),
                "(".into(),
                ")".into(),
                ";".into(),
            ],
            vec![
                "+".to_string(),
                fns[b].clone(),
                "(".into(),
                ")".into(),
                ";".into(),
            ],
        ]
        .concat();
        out.push(ex(
            src,
            vec![
                "replace".into(),
                fns[a].clone(),
                "with".into(),
                fns[b].clone(),
            ],
        ));
    }
    out
}

fn overfit() -> Outcome {
    let started = Instant::now();
    let data = overfit_corpus();
    let src_vocab = build_vocab(&data, Side::Source, 1, None).unwrap();
    let tgt_vocab = build_vocab(&data, Side::Target, 1, None).unwrap();
    let pairs = encode_pairs(&data, &src_vocab, &tgt_vocab);
    let cfg = ModelConfig {
        src_vocab: src_vocab.len(),
        tgt_vocab: tgt_vocab.len(),
        hidden_dim: 64,
        embed_dim: 32,
        embed_dropout: 0.0,
        max_decode_len: 10,
    };
    let train_cfg = TrainConfig {
        lr: 0.1,
        teacher_forcing_p: 1.0,
        batch_size: 4,
        clip_norm: Some(5.0),
        max_epochs: 500,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut model = Seq2Seq::init(cfg, 1).unwrap();
    let mut epochs = 0;
    let (mut loss, mut bleu) = (f64::INFINITY, 0.0);
    // Train in chunks and stop at the first epoch meeting both targets.
    while epochs < 500 {
        let mut chunk = train_cfg.clone();
        chunk.max_epochs = 500 - epochs;
        chunk.seed = train_cfg.seed + epochs as u64;
        let res = train_with(model.clone(), &pairs, &pairs, &chunk, None, |r| {
            r.valid_loss >= 0.1
        })
        .unwrap();
        epochs += res.log.epochs.len();
        model = res.best;
        loss = evaluate_loss(&model, &pairs, 32).unwrap();
        bleu = id_bleu(&pairs, &decode_all(&model, &pairs, 10));
        if (loss < 0.1 && bleu >= 95.0) || res.log.epochs.is_empty() {
            break;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        loss < 0.1 && bleu >= 95.0 && epochs <= 500 && secs < 600.0,
        format!("loss {loss:.4}, train BLEU {bleu:.2} after {epochs} epochs, {secs:.1}s"),
    )
}

// 3 ─────────────────────────────────────────────────────────────────────────

const NOISE: [&str; 16] = [
    "*", ".", "log", "tmp", "/", "build", "-", "#", "out", "class", "bin", "~", "idea", "iml",
    "dist", "cache",
];

fn names() -> Vec<String> {
    let a = ["ba", "de", "fi", "go", "ku", "la", "me", "no", "pi", "ru"];
    let b = ["sa", "te", "vo", "xi", "zu", "mo", "ne", "ly", "ka"];
    a.iter()
        .flat_map(|x| b.iter().map(move |y| format!("{x}{y}")))
        .collect()
}

fn noise_line(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut l = vec!["+".to_string()];
    for _ in 0..rng.gen_range(1..=3) {
        l.push(NOISE[rng.gen_range(0..NOISE.len())].to_string());
    }
    l
}

/// A `.gitignore` diff adding `name` among other ignore patterns.
fn ignore_example(name: &str, rng: &mut ChaCha8Rng) -> ProcessedExample {
    let mut src = strs(&["gitignore"]);
    let before = rng.gen_range(0..=2);
    for _ in 0..before {
        src.extend(noise_line(rng));
    }
    src.extend(["+".to_string(), name.to_string()]);
    for _ in 0..(2 - before) {
        src.extend(noise_line(rng));
    }
    ex(src, strs(&["ignore", "update", "'", name, "."]))
}

/// Other commits mentioning the name, so every name is in both vocabularies.
fn fix_example(name: &str, rng: &mut ChaCha8Rng) -> ProcessedExample {
    let mut src = vec![name.to_string(), ".".into(), "java".into(), "-".into()];
    src.extend(noise_line(rng).into_iter().skip(1));
    src.extend(noise_line(rng));
    ex(src, vec!["fix".into(), name.to_string(), "handling".into()])
}

fn memorization() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut all = names();
    all.shuffle(&mut rng);
    let (held_out, seen) = all.split_at(30);
    let mut train: Vec<ProcessedExample> = (0..300)
        .map(|i| ignore_example(&seen[i % seen.len()], &mut rng))
        .collect();
    for name in &all {
        for _ in 0..2 {
            train.push(fix_example(name, &mut rng));
        }
    }
    let test: Vec<ProcessedExample> = held_out
        .iter()
        .map(|n| ignore_example(n, &mut rng))
        .collect();

    let src_vocab = build_vocab(&train, Side::Source, 1, None).unwrap();
    let tgt_vocab = build_vocab(&train, Side::Target, 1, None).unwrap();
    let pairs = encode_pairs(&train, &src_vocab, &tgt_vocab);
    let test_pairs = encode_pairs(&test, &src_vocab, &tgt_vocab);
    let cfg = ModelConfig {
        src_vocab: src_vocab.len(),
        tgt_vocab: tgt_vocab.len(),
        hidden_dim: 64,
        embed_dim: 32,
        embed_dropout: 0.1,
        max_decode_len: 10,
    };
    let train_cfg = TrainConfig {
        batch_size: 16,
        max_epochs: 150,
        seed: 4,
        ..TrainConfig::default()
    };
    let res = train_with(
        Seq2Seq::init(cfg, 4).unwrap(),
        &pairs,
        &pairs,
        &train_cfg,
        None,
        |_| true,
    )
    .unwrap();
    let model = res.best;

    let pattern = ["ignore", "update", "'", "<*>", "."];
    let (mut matched, mut exact) = (0, 0);
    let (mut mass, mut uniform) = (0.0, 0.0);
    for (p, e) in test_pairs.iter().zip(&test) {
        let (ids, attn) = model
            .greedy_decode(&p.src, &vec![true; p.src.len()], 10)
            .unwrap();
        let words = tgt_vocab.decode(&ids).unwrap();
        if matches_pattern(&words, &pattern) {
            matched += 1;
        }
        if words == e.target_tokens {
            exact += 1;
        }
        // Step 3 emits the name; columns are shifted by the leading <sos>.
        let name = &e.target_tokens[3];
        if let Some(row) = attn.rows().get(3) {
            mass += e
                .source_tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| *t == name)
                .map(|(j, _)| row[j + 1])
                .sum::<f64>();
        }
        uniform += 1.0 / p.src.len() as f64;
    }
    let n = test.len() as f64;
    let rate = matched as f64 / n;
    let ratio = (mass / n) / (uniform / n);
    let secs = started.elapsed().as_secs_f64();
    outcome(
        rate >= 0.9 && ratio >= 2.0,
        format!(
            "{matched}/30 match the template ({exact} exactly), name attention {:.3} vs uniform {:.3} (×{ratio:.1}), {} epochs, {secs:.1}s",
            mass / n,
            uniform / n,
            res.log.epochs.len()
        ),
    )
}

// 4 ─────────────────────────────────────────────────────────────────────────

fn grams<'a>(s: &[&'a str], n: usize) -> Vec<Vec<&'a str>> {
    if s.len() < n {
        return Vec::new();
    }
    (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
}

/// Clipped overlap by exhaustive enumeration and linear-scan counting.
fn brute_overlap(r: &[&str], h: &[&str], n: usize) -> (usize, usize) {
    let (rg, hg) = (grams(r, n), grams(h, n));
    let mut distinct: Vec<&Vec<&str>> = Vec::new();
    for g in &hg {
        if !distinct.contains(&g) {
            distinct.push(g);
        }
    }
    let count = |list: &[Vec<&str>], g: &Vec<&str>| list.iter().filter(|x| *x == g).count();
    let m = distinct
        .iter()
        .map(|g| count(&hg, g).min(count(&rg, g)))
        .sum();
    (m, hg.len())
}

fn brute_bleu(pairs: &[(Vec<&str>, Vec<&str>)]) -> f64 {
    let mut prod = 1.0;
    for n in 1..=4 {
        let (mut m, mut t) = (0, 0);
        for (r, h) in pairs {
            let (a, b) = brute_overlap(r, h, n);
            m += a;
            t += b;
        }
        if m == 0 {
            return 0.0;
        }
        prod *= m as f64 / t as f64;
    }
    let r: usize = pairs.iter().map(|p| p.0.len()).sum();
    let c: usize = pairs.iter().map(|p| p.1.len()).sum();
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    100.0 * bp * prod.powf(0.25)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn brute_rouge_n(r: &[&str], h: &[&str], n: usize) -> f64 {
    let (m, hn) = brute_overlap(r, h, n);
    let rn = grams(r, n).len();
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    f1(div(m, hn), div(m, rn))
}

fn memo_lcs(a: &[&str], b: &[&str], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    if let Some(&v) = memo.get(&(a.len(), b.len())) {
        return v;
    }
    let v = if a[0] == b[0] {
        1 + memo_lcs(&a[1..], &b[1..], memo)
    } else {
        memo_lcs(&a[1..], b, memo).max(memo_lcs(a, &b[1..], memo))
    };
    memo.insert((a.len(), b.len()), v);
    v
}

fn brute_rouge_l(r: &[&str], h: &[&str]) -> f64 {
    if r.is_empty() || h.is_empty() {
        return 0.0;
    }
    let l = memo_lcs(r, h, &mut HashMap::new()) as f64;
    f1(l / h.len() as f64, l / r.len() as f64)
}

fn metric_oracles() -> Outcome {
    const WORDS: [&str; 6] = ["fix", "add", "bug", "test", "null", "the"];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let seq = |rng: &mut ChaCha8Rng| -> Vec<&str> {
        (0..rng.gen_range(0..=8))
            .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
            .collect()
    };
    let mut worst = 0.0f64;
    let mut corpus = Vec::new();
    for _ in 0..100 {
        let (r, h) = (seq(&mut rng), seq(&mut rng));
        let single = [(r.clone(), h.clone())];
        worst = worst
            .max((bleu_corpus(&single, 4) - brute_bleu(&single)).abs())
            .max((rouge_n(&r, &h, 1).f1 - brute_rouge_n(&r, &h, 1)).abs())
            .max((rouge_n(&r, &h, 2).f1 - brute_rouge_n(&r, &h, 2)).abs())
            .max((rouge_l(&r, &h) - brute_rouge_l(&r, &h)).abs());
        corpus.push((r, h));
    }
    worst = worst.max((bleu_corpus(&corpus, 4) - brute_bleu(&corpus)).abs());

    let toks = |s: &'static str| s.split_whitespace().collect::<Vec<_>>();
    let worked = bleu_corpus(
        &[(
            toks("fix null pointer exception"),
            toks("fix null pointer exception in parser"),
        )],
        4,
    );
    let rl = rouge_l(&toks("add unit tests"), &toks("add tests"));
    let pass = worst < 1e-12 && (worked - 50.81).abs() < 5e-3 && (rl - 0.8).abs() < 1e-15;
    outcome(
        pass,
        format!("max oracle deviation {worst:.1e} over 100 pairs, worked BLEU {worked:.4}, ROUGE-L {rl}"),
    )
}

// 5 ─────────────────────────────────────────────────────────────────────────

fn golden_raw() -> Vec<RawCommit> {
    JsonlCommits::open(&fixture("raw.jsonl"))
        .unwrap()
        .map(Result::unwrap)
        .collect()
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    items
        .iter()
        .flat_map(|i| {
            let mut line = serde_json::to_vec(i).unwrap();
            line.push(b'\n');
            line
        })
        .collect()
}

fn golden_run(cfg: PipelineConfig) -> (Vec<ProcessedExample>, Vec<Rejection>) {
    let fit = cfg.verb_filter == commitgen::preprocess::VerbFilter::VdoApprox;
    let mut p = Preprocessor::new(cfg).unwrap();
    let raw = golden_raw();
    if fit {
        p.fit(&raw);
    }
    let (mut kept, mut rejected) = (Vec::new(), Vec::new());
    for c in &raw {
        match p.process(c) {
            Ok(e) => kept.push(e),
            Err(reason) => rejected.push(Rejection {
                sha: c.sha.clone(),
                reason,
            }),
        }
    }
    (kept, rejected)
}

fn golden_corpus() -> Outcome {
    let mut failures = Vec::new();
    let mut counts = Vec::new();
    for (mode, cfg) in [
        ("rigorous", PipelineConfig::rigorous()),
        ("reference", PipelineConfig::reference()),
    ] {
        let (kept, rejected) = golden_run(cfg);
        counts.push(format!("{mode} {}+{}", kept.len(), rejected.len()));
        if jsonl(&kept) != std::fs::read(fixture(&format!("{mode}.expected.jsonl"))).unwrap() {
            failures.push(format!("{mode} examples"));
        }
        if jsonl(&rejected)
            != std::fs::read(fixture(&format!("{mode}.rejects.expected.jsonl"))).unwrap()
        {
            failures.push(format!("{mode} rejections"));
        }
    }
    let n = golden_raw().len();
    outcome(
        failures.is_empty() && n == 25,
        if failures.is_empty() {
            format!("{n} commits, byte-exact ({})", counts.join(", "))
        } else {
            format!("mismatch in {}", failures.join(", "))
        },
    )
}

// 6 ─────────────────────────────────────────────────────────────────────────

fn cli(args: &[&str]) -> i32 {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    run_with(
        std::iter::once("commitgen").chain(args.iter().copied()),
        &mut out,
        &mut err,
    )
}

fn split_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let text: String = (0..40_000).map(|i| format!("{{\"id\":{i}}}\n")).collect();
    std::fs::write(&corpus, text).unwrap();
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let code = cli(&[
            "split",
            "--in",
            corpus.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--n",
            "36000",
            "--ratios",
            "0.8,0.1,0.1",
            "--seed",
            "7",
        ]);
        assert_eq!(code, 0);
        let read = |f: &str| std::fs::read_to_string(out.join(f)).unwrap();
        runs.push([read("train.jsonl"), read("valid.jsonl"), read("test.jsonl")]);
    }
    let sizes: Vec<usize> = runs[0].iter().map(|s| s.lines().count()).collect();
    let mut all: Vec<&str> = runs[0].iter().flat_map(|s| s.lines()).collect();
    all.sort_unstable();
    all.dedup();
    let identical = runs[0] == runs[1];
    outcome(
        sizes == [28_800, 3_600, 3_600] && all.len() == 36_000 && identical,
        format!(
            "sizes {sizes:?}, {} distinct records, identical reruns: {identical}",
            all.len()
        ),
    )
}

// 7 ─────────────────────────────────────────────────────────────────────────

fn scheduler_conformance() -> Outcome {
    // One improving epoch followed by `flat` epochs that never improve.
    let script = |flat: usize| {
        let mut s = Scheduler::new(0.1, 0.1, 10, 20);
        let first = s.step(1.0);
        let mut decisions = vec![first];
        decisions.extend((0..flat).map(|_| s.step(1.1)));
        decisions
    };
    let ten = script(10);
    let decays: Vec<usize> = (1..ten.len())
        .filter(|&i| ten[i].lr < ten[i - 1].lr)
        .collect();
    let decayed_once =
        decays == [10] && (ten[10].lr - 0.01).abs() < 1e-15 && ten.iter().all(|d| !d.stop);
    let twenty = script(20);
    let stop_at = twenty.iter().position(|d| d.stop);
    outcome(
        decayed_once && stop_at == Some(20),
        format!(
            "10-epoch plateau: decays after plateau epochs {decays:?}, lr {:.2}; 20-epoch plateau: stop after plateau epoch {:?}",
            ten[10].lr, stop_at
        ),
    )
}

// 8 ─────────────────────────────────────────────────────────────────────────

fn baseline_sanity() -> Outcome {
    let (train, _) = golden_run(PipelineConfig::rigorous());
    let index = build_index(&train).unwrap();
    let mut checked = 0;
    let mut failures = Vec::new();
    for (i, e) in train.iter().enumerate() {
        // Identical diffs with different messages cannot both be recovered.
        if train
            .iter()
            .filter(|o| o.source_tokens == e.source_tokens)
            .count()
            > 1
        {
            continue;
        }
        checked += 1;
        let direct = nngen_generate(&index, &e.source_tokens, DEFAULT_K).unwrap();
        let doubled: Vec<&String> = e.source_tokens.iter().chain(&e.source_tokens).collect();
        let scaled = nngen_generate(&index, &doubled, DEFAULT_K).unwrap();
        if direct != e.target_tokens.as_slice() || scaled != direct {
            failures.push(i);
        }
    }
    outcome(
        failures.is_empty() && checked >= 15,
        format!("{checked} distinct training diffs retrieved their own message, also with doubled counts; failures {failures:?}"),
    )
}

// 9 ─────────────────────────────────────────────────────────────────────────

fn checkpoint_integrity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let src = Vocabulary::from_tokens(["a", "b", "c"]);
    let tgt = Vocabulary::from_tokens(["x", "y"]);
    let cfg = ModelConfig {
        src_vocab: src.len(),
        tgt_vocab: tgt.len(),
        hidden_dim: 12,
        embed_dim: 5,
        ..ModelConfig::default()
    };
    let model = Seq2Seq::init(cfg, 21).unwrap();
    let fp = VocabFingerprints {
        src: src.fingerprint(),
        tgt: tgt.fingerprint(),
    };
    save_checkpoint(dir.path(), &model, fp, Some(0.5), 1).unwrap();
    let (loaded, _) = load_checkpoint(dir.path(), Some(fp)).unwrap();
    let exact = model
        .params
        .named()
        .iter()
        .zip(loaded.params.named())
        .all(|((_, a), (_, b))| {
            a.data().iter().zip(b.data()).all(|(x, y)| {
                (*x as f32).to_bits() == (*y as f32).to_bits() && *y == (*x as f32) as f64
            })
        });
    let other = Vocabulary::from_tokens(["x", "z"]);
    let refused = matches!(
        load_checkpoint(
            dir.path(),
            Some(VocabFingerprints {
                src: fp.src,
                tgt: other.fingerprint()
            })
        ),
        Err(CheckpointError::Fingerprint { .. })
    );
    outcome(
        exact && refused,
        format!(
            "{} parameters bit-exact at f32: {exact}; foreign vocabulary refused: {refused}",
            model.params.num_parameters()
        ),
    )
}

// 10 ────────────────────────────────────────────────────────────────────────

fn length_distribution() -> Outcome {
    let (kept, _) = golden_run(PipelineConfig::rigorous());
    let stats = corpus_stats(&kept);
    let longest = stats
        .source_length_histogram
        .keys()
        .next_back()
        .copied()
        .unwrap_or(0);
    let svg = render_histogram_svg(
        &stats.source_length_histogram,
        "Diff length",
        "source tokens",
    );
    let renders =
        svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>") && svg.contains("<rect");
    outcome(
        longest <= 100 && renders,
        format!(
            "{} examples, longest source {longest} tokens, SVG {} bytes",
            stats.count,
            svg.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient soundness", gradient_soundness),
        ("overfit capability", overfit),
        ("memorization of the ignore-update template", memorization),
        ("metric oracle equivalence", metric_oracles),
        ("preprocessing golden corpus", golden_corpus),
        ("split determinism", split_determinism),
        ("scheduler conformance", scheduler_conformance),
        ("baseline sanity", baseline_sanity),
        ("checkpoint integrity", checkpoint_integrity),
        ("diff-length bound", length_distribution),
    ];
    // Positional arguments select criteria by number; libtest flags are ignored.
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !wanted.is_empty() && !wanted.contains(&number) {
            continue;
        }
        let started = Instant::now();
        let result = run();
        let took = started.elapsed();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} {number:>2} {name}: {} [{:.1}s]",
            result.detail,
            took.as_secs_f64()
        );
        if !result.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
