//! Minimal SVG line charts of training curves: one panel per metric, one
//! polyline per series.

use std::fmt::Write as _;
use std::path::Path;

use super::train::StepMetrics;
use crate::error::{LabError, Result};

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 48.0;
const LEGEND_H: f64 = 28.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub type Panel = (&'static str, fn(&StepMetrics) -> f64);

/// Panels in drawing order: (title, accessor).
pub const PANELS: [Panel; 3] = [
    ("tool_call_ratio", |m| m.tool_call_ratio),
    ("mean_outcome_reward", |m| m.mean_outcome_reward),
    ("mean_tool_reward", |m| m.mean_tool_reward),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub steps: Vec<usize>,
    /// One column per panel, aligned with `steps`.
    pub values: [Vec<f64>; 3],
}

impl Series {
    pub fn new(label: impl Into<String>, metrics: &[StepMetrics]) -> Self {
        let column = |f: fn(&StepMetrics) -> f64| metrics.iter().map(f).collect::<Vec<_>>();
        Self {
            label: label.into(),
            steps: metrics.iter().map(|m| m.step).collect(),
            values: [column(PANELS[0].1), column(PANELS[1].1), column(PANELS[2].1)],
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the chart. Fails on an empty series list, an empty series or
/// non-finite values.
pub fn render_curves_svg(series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.steps.is_empty()) {
        return Err(LabError::Precondition("no data to plot".into()));
    }
    if series
        .iter()
        .flat_map(|s| s.values.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(LabError::Precondition("non-finite value in plotted series".into()));
    }
    let step_lo = series.iter().flat_map(|s| &s.steps).min().copied().unwrap_or(0) as f64;
    let step_hi = series.iter().flat_map(|s| &s.steps).max().copied().unwrap_or(0) as f64;
    let x_span = if step_hi > step_lo { step_hi - step_lo } else { 1.0 };

    let cell_w = PANEL_W + 2.0 * MARGIN;
    let width = cell_w * PANELS.len() as f64;
    let height = PANEL_H + 2.0 * MARGIN + LEGEND_H * series.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"##
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);

    for (p, (title, _)) in PANELS.iter().enumerate() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in series {
            for &v in &s.values[p] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let ox = cell_w * p as f64 + MARGIN;
        let oy = MARGIN;
        let sx = |step: f64| ox + (step - step_lo) / x_span * PANEL_W;
        let sy = |v: f64| oy + PANEL_H - (v - lo) / (hi - lo) * PANEL_H;

        let _ = writeln!(out, r#"<g class="panel" id="panel-{title}">"#);
        let _ = writeln!(
            out,
            r##"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444444"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
            ox + PANEL_W / 2.0,
            oy - 14.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#,
            ox + PANEL_W / 2.0,
            oy + PANEL_H + 32.0
        );
        for (v, y) in [(lo, oy + PANEL_H), (hi, oy)] {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
                ox - 4.0,
                y + 4.0,
                v
            );
        }
        for (st, x) in [(step_lo, ox), (step_hi, ox + PANEL_W)] {
            let _ = writeln!(
                out,
                r#"<text x="{x}" y="{}" text-anchor="middle">{st}</text>"#,
                oy + PANEL_H + 14.0
            );
        }
        for (k, s) in series.iter().enumerate() {
            let points: Vec<String> = s
                .steps
                .iter()
                .zip(&s.values[p])
                .map(|(&st, &v)| format!("{:.2},{:.2}", sx(st as f64), sy(v)))
                .collect();
            let _ = writeln!(
                out,
                r##"<polyline fill="none" stroke="{}" stroke-width="1.5" data-series="{}" points="{}"/>"##,
                COLORS[k % COLORS.len()],
                escape(&s.label),
                points.join(" ")
            );
        }
        let _ = writeln!(out, "</g>");
    }

    let _ = writeln!(out, r#"<g class="legend">"#);
    for (k, s) in series.iter().enumerate() {
        let y = PANEL_H + 2.0 * MARGIN + LEGEND_H * k as f64 + 10.0;
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="3"/>"##,
            MARGIN + 24.0,
            COLORS[k % COLORS.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            MARGIN + 30.0,
            y + 4.0,
            escape(&s.label)
        );
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_curves_svg(series: &[Series], path: &Path) -> Result<()> {
    std::fs::write(path, render_curves_svg(series)?)?;
    Ok(())
}
