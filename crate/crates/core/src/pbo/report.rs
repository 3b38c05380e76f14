use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Metric, PboError, PboMode, Verdict};

/// Fixed-width bins over `[-ln H, ln H]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Empirical density `f(lambda)` per bin.
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn new(lambdas: &[f64], h: usize, bins: usize) -> Self {
        let hi = (h as f64).ln();
        let lo = -hi;
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0u64; bins];
        for &l in lambdas {
            let b = (((l - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let total = lambdas.len().max(1) as f64;
        let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
        Self {
            edges,
            counts,
            density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PboResult {
    pub p: f64,
    pub alpha: f64,
    pub verdict: Verdict,
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub rows_per_block: usize,
    pub metric: Metric,
    /// The mode actually used.
    pub mode: PboMode,
    /// Combinations evaluated.
    pub combination_count: u64,
    /// `C(S, S/2)`.
    pub total_combinations: u64,
    pub histogram: Histogram,
    /// One logit per evaluated combination, in enumeration order.
    #[serde(skip)]
    pub lambdas: Vec<f64>,
}

impl PboResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results always serialize")
    }
}

/// `family,index,lambda` rows for every result.
pub fn write_logits_csv<W: Write>(
    writer: W,
    results: &[(&str, &PboResult)],
) -> Result<(), PboError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["family", "index", "lambda"])?;
    for (family, r) in results {
        for (i, l) in r.lambdas.iter().enumerate() {
            w.write_record([family.to_string(), i.to_string(), l.to_string()])?;
        }
    }
    w.flush().map_err(|e| PboError::Io(e.to_string()))
}

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// One stacked density panel per family.
pub fn histogram_svg(results: &[(&str, &PboResult)]) -> String {
    let height = PANEL_H * results.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    for (k, (family, r)) in results.iter().enumerate() {
        let top = PANEL_H * k as f64;
        let plot_w = PANEL_W - 2.0 * MARGIN;
        let plot_h = PANEL_H - 2.0 * MARGIN;
        let base = top + MARGIN + plot_h;
        let peak = r.histogram.density.iter().copied().fold(0.0, f64::max);
        let bar_w = plot_w / r.histogram.counts.len() as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN}" y="{:.1}">{} p={:.4} alpha={} {}</text>"#,
            top + MARGIN - 12.0,
            escape(family),
            r.p,
            r.alpha,
            r.verdict
        );
        for (i, d) in r.histogram.density.iter().enumerate() {
            let bh = if peak > 0.0 { d / peak * plot_h } else { 0.0 };
            let _ = writeln!(
                svg,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a78b0"/>"##,
                MARGIN + bar_w * i as f64,
                base - bh,
                bar_w,
                bh
            );
        }
        let zero_x = MARGIN + plot_w / 2.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{MARGIN}" y1="{base:.1}" x2="{:.1}" y2="{base:.1}" stroke="black"/>"#,
            MARGIN + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{zero_x:.1}" y1="{:.1}" x2="{zero_x:.1}" y2="{base:.1}" stroke="red" stroke-dasharray="4 3"/>"#,
            top + MARGIN
        );
        let lo = r.histogram.edges.first().copied().unwrap_or(0.0);
        let hi = r.histogram.edges.last().copied().unwrap_or(0.0);
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN}" y="{:.1}">{lo:.3}</text>"#,
            base + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{hi:.3}</text>"#,
            MARGIN + plot_w,
            base + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{zero_x:.1}" y="{:.1}" text-anchor="middle">logit</text>"#,
            base + 16.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_covers_the_bounds() {
        let h = 5;
        let l = (h as f64).ln();
        let hist = Histogram::new(&[-l, 0.0, l, l], h, 10);
        assert_eq!(hist.counts[0], 1);
        assert_eq!(hist.counts[5], 1);
        assert_eq!(hist.counts[9], 2);
        let width = 2.0 * l / 10.0;
        let area: f64 = hist.density.iter().map(|d| d * width).sum();
        assert!((area - 1.0).abs() < 1e-12);
    }
}
