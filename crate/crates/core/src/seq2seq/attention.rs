use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Attention weights recorded during decoding: one row per emitted target
/// token, one column per source position.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    rows: Vec<Vec<f64>>,
    mask: Vec<bool>,
}

impl AttentionMap {
    pub fn new(rows: Vec<Vec<f64>>, mask: Vec<bool>) -> Self {
        AttentionMap { rows, mask }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn source_mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.mask.len()
    }

    /// Attaches token labels. Columns and rows beyond the label lists are
    /// dropped, so a source without its markers can be passed directly.
    pub fn to_dump(&self, source: &[String], target: &[String]) -> AttentionDump {
        let cols = source.len().min(self.num_cols());
        AttentionDump {
            source: source[..cols].to_vec(),
            target: target.iter().take(self.rows.len()).cloned().collect(),
            alpha: self
                .rows
                .iter()
                .take(target.len())
                .map(|r| r[..cols].to_vec())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionDump {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub alpha: Vec<Vec<f64>>,
}

const CELL: usize = 18;
const MARGIN_LEFT: usize = 120;
const MARGIN_TOP: usize = 120;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Greyscale heatmap: source tokens along the x-axis, generated tokens along
/// the y-axis, darker cells for larger weights.
pub fn render_heatmap_svg(dump: &AttentionDump) -> String {
    let cols = dump.source.len();
    let rows = dump.target.len();
    let width = MARGIN_LEFT + cols * CELL + 10;
    let height = MARGIN_TOP + rows * CELL + 10;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
    );
    for (j, tok) in dump.source.iter().enumerate() {
        let x = MARGIN_LEFT + j * CELL + CELL / 2;
        let y = MARGIN_TOP - 6;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" transform="rotate(-60 {x} {y})">{}</text>"#,
            escape(tok)
        );
    }
    for (i, tok) in dump.target.iter().enumerate() {
        let y = MARGIN_TOP + i * CELL + CELL * 2 / 3;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6,
            escape(tok)
        );
        let row = dump.alpha.get(i).map(Vec::as_slice).unwrap_or(&[]);
        for (j, &a) in row.iter().enumerate().take(cols) {
            let shade = (255.0 * (1.0 - a.clamp(0.0, 1.0))).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},{shade})"><title>{a:.4}</title></rect>"#,
                MARGIN_LEFT + j * CELL,
                MARGIN_TOP + i * CELL
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips_and_svg_has_one_cell_per_weight() {
        let map = AttentionMap::new(
            vec![vec![0.25, 0.75, 0.0], vec![1.0, 0.0, 0.0]],
            vec![true, true, false],
        );
        let src: Vec<String> = ["a", "<b>"].iter().map(|s| s.to_string()).collect();
        let tgt: Vec<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
        let dump = map.to_dump(&src, &tgt);
        assert_eq!(dump.alpha, vec![vec![0.25, 0.75], vec![1.0, 0.0]]);
        let json = serde_json::to_string(&dump).unwrap();
        assert!(
            json.starts_with(r#"{"source":["a","<b>"],"target":["x","y"],"alpha":[[0.25,0.75]"#)
        );
        assert_eq!(serde_json::from_str::<AttentionDump>(&json).unwrap(), dump);
        let svg = render_heatmap_svg(&dump);
        assert_eq!(svg.matches("<rect").count(), 4);
        assert!(svg.contains("&lt;b&gt;"));
        assert!(svg.contains("rgb(0,0,0)"));
    }
}
