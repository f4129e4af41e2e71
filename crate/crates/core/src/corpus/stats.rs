use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::preprocess::ProcessedExample;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    /// Exact source length → number of examples.
    #[serde(rename = "source_hist")]
    pub source_length_histogram: BTreeMap<usize, usize>,
    #[serde(rename = "target_hist")]
    pub target_length_histogram: BTreeMap<usize, usize>,
    /// Distinct tokens over both sides.
    pub vocab_estimate: usize,
}

pub fn corpus_stats(examples: &[ProcessedExample]) -> CorpusStats {
    let mut src = BTreeMap::new();
    let mut tgt = BTreeMap::new();
    let mut vocab: HashSet<&str> = HashSet::new();
    for e in examples {
        *src.entry(e.source_tokens.len()).or_insert(0) += 1;
        *tgt.entry(e.target_tokens.len()).or_insert(0) += 1;
        vocab.extend(
            e.source_tokens
                .iter()
                .chain(&e.target_tokens)
                .map(String::as_str),
        );
    }
    CorpusStats {
        count: examples.len(),
        source_length_histogram: src,
        target_length_histogram: tgt,
        vocab_estimate: vocab.len(),
    }
}

impl CorpusStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

/// Bar chart of a length histogram, one bar per length from 0 to the largest
/// observed length.
pub fn render_histogram_svg(hist: &BTreeMap<usize, usize>, title: &str, x_label: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let max_len = hist.keys().next_back().copied().unwrap_or(0);
    let max_count = hist.values().copied().max().unwrap_or(0).max(1);
    let bars = (max_len + 1) as f64;
    let bw = (W - 2.0 * PAD) / bars;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let esc = |t: &str| {
        t.replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;")
    };
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        W / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = H - PAD,
        x2 = W - PAD
    );
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#,
        H - PAD
    );
    for (&len, &count) in hist {
        let h = (H - 2.0 * PAD) * count as f64 / max_count as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="steelblue"><title>{len}: {count}</title></rect>"#,
            PAD + len as f64 * bw,
            H - PAD - h,
            bw.max(0.5),
            h
        );
    }
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}">0</text>"#, H - PAD + 16.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{max_len}</text>"#,
        W - PAD,
        H - PAD + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 10.0,
        esc(x_label)
    );
    let _ = writeln!(s, r#"<text x="12" y="{PAD}">{max_count}</text>"#);
    s.push_str("</svg>\n");
    s
}
