//! Metrics CSV: a header row, then one row per step in `StepMetrics` field
//! order, reals printed in plain decimal with 6 significant digits.

use std::io::Write;

use std::path::Path;

use super::train::StepMetrics;
use crate::error::{LabError, Result};

pub const HEADER: [&str; 10] = [
    "step",
    "tool_call_ratio",
    "mean_outcome_reward",
    "mean_tool_reward",
    "accuracy",
    "mean_visual_tokens",
    "tool_ratio_fine",
    "tool_ratio_coarse",
    "loss",
    "grad_norm",
];

/// Plain decimal rendering with 6 significant digits.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let mut exp = v.abs().log10().floor() as i32;
    // Rounding can carry into the next decade (9.999996 -> 10.0000).
    for _ in 0..2 {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let rounded: f64 = s.parse().expect("formatted float parses");
        let new_exp = if rounded == 0.0 { exp } else { rounded.abs().log10().floor() as i32 };
        if new_exp == exp || decimals == 0 {
            return s;
        }
        exp = new_exp;
    }
    format!("{v:.0}")
}

pub fn metrics_row(m: &StepMetrics) -> Vec<String> {
    let reals = [
        m.tool_call_ratio,
        m.mean_outcome_reward,
        m.mean_tool_reward,
        m.accuracy,
        m.mean_visual_tokens,
        m.tool_ratio_fine,
        m.tool_ratio_coarse,
        m.loss,
        m.grad_norm,
    ];
    std::iter::once(m.step.to_string())
        .chain(reals.into_iter().map(format_sig6))
        .collect()
}

pub fn write_metrics_csv<W: Write>(out: W, series: &[StepMetrics]) -> Result<()> {
    if series.is_empty() {
        return Err(LabError::Precondition("metrics series is empty".into()));
    }
    let mut w = ::csv::Writer::from_writer(out);
    w.write_record(HEADER).map_err(csv_error)?;
    for m in series {
        w.write_record(metrics_row(m)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: ::csv::Error) -> LabError {
    match e.into_kind() {
        ::csv::ErrorKind::Io(io) => LabError::Io(io),
        other => LabError::Format(format!("csv: {other:?}")),
    }
}

pub fn emit_metrics_csv(series: &[StepMetrics], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, series)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Parses a metrics CSV written by [`write_metrics_csv`].
pub fn read_metrics_csv(text: &str) -> Result<Vec<StepMetrics>> {
    let mut r = ::csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_error)?;
    if header.iter().ne(HEADER) {
        return Err(LabError::Format(format!("unexpected csv header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}
