//! Per-example attention reports and their JSON / SVG renderings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub tokens: Vec<String>,
    /// One weight per token.
    pub weights: Vec<f64>,
    pub pred: String,
    pub gold: String,
    pub variant: String,
}

impl AttentionReport {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.weights.len() {
            return Err(Error::Contract(format!(
                "{} tokens but {} weights",
                self.tokens.len(),
                self.weights.len()
            )));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!("attention weights sum to {total}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::Config(format!("unknown report format `{other}` (json, svg)"))),
        }
    }
}

fn nonempty(reports: &[AttentionReport]) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Contract("no attention reports to export".into()));
    }
    reports.iter().try_for_each(AttentionReport::validate)
}

/// A JSON array of `{tokens, weights, pred, gold, variant}` objects.
pub fn to_json(reports: &[AttentionReport]) -> Result<String> {
    nonempty(reports)?;
    let mut s = serde_json::to_string_pretty(reports).map_err(|e| Error::Contract(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<Vec<AttentionReport>> {
    serde_json::from_str(text).map_err(|e| Error::parse("<json>", e.line(), e.to_string()))
}

/// Red channel stays 255; green and blue fall linearly from 255 at weight 0
/// to 0 at weight 1.
pub fn cell_fill(weight: f64) -> String {
    let c = (255.0 * (1.0 - weight.clamp(0.0, 1.0))).round() as u8;
    format!("rgb(255,{c},{c})")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const ROW_H: usize = 44;
const LABEL_W: usize = 150;
const CHAR_W: usize = 8;

fn cell_width(token: &str) -> usize {
    (token.chars().count() * CHAR_W + 16).max(56)
}

/// One row per example: a `gold / pred` label, then one cell per token shaded
/// by its weight, with the token and the weight (3 decimals) printed inside.
pub fn to_svg(reports: &[AttentionReport]) -> Result<String> {
    nonempty(reports)?;
    let width = reports
        .iter()
        .map(|r| LABEL_W + r.tokens.iter().map(|t| cell_width(t)).sum::<usize>())
        .max()
        .unwrap_or(LABEL_W)
        + 8;
    let height = reports.len() * ROW_H + 8;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"12\">\n"
    );
    for (i, r) in reports.iter().enumerate() {
        let y = 4 + i * ROW_H;
        out.push_str(&format!(
            "  <g class=\"row\" data-variant=\"{}\">\n    <text x=\"4\" y=\"{}\">gold {} / pred {}</text>\n",
            escape(&r.variant),
            y + 26,
            escape(&r.gold),
            escape(&r.pred)
        ));
        let mut x = LABEL_W;
        for (tok, &w) in r.tokens.iter().zip(&r.weights) {
            let cw = cell_width(tok);
            out.push_str(&format!(
                "    <rect x=\"{x}\" y=\"{y}\" width=\"{cw}\" height=\"{}\" fill=\"{}\" stroke=\"#999\"/>\n",
                ROW_H - 4,
                cell_fill(w)
            ));
            out.push_str(&format!(
                "    <text x=\"{}\" y=\"{}\">{}</text>\n    <text x=\"{}\" y=\"{}\" class=\"w\">{w:.3}</text>\n",
                x + 6,
                y + 16,
                escape(tok),
                x + 6,
                y + 32
            ));
            x += cw;
        }
        out.push_str("  </g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render(reports: &[AttentionReport], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => to_json(reports),
        ReportFormat::Svg => to_svg(reports),
    }
}

pub fn export(reports: &[AttentionReport], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), render(reports, format)?.as_bytes())
}
