use std::fmt::Write;

use super::{MetricReport, METRIC_NAMES};

/// A labeled row of the metrics table.
pub struct CategoryRow<'a> {
    pub label: &'a str,
    pub report: &'a MetricReport,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

/// Aligned text table with one column per metric.
pub fn format_table(rows: &[CategoryRow<'_>]) -> String {
    let label_w = rows
        .iter()
        .map(|r| r.label.len())
        .chain(std::iter::once("Category".len()))
        .max()
        .unwrap_or(8);
    let col_w: Vec<usize> = METRIC_NAMES.iter().map(|n| n.len().max(8)).collect();
    let mut out = String::new();
    let _ = write!(out, "{:<label_w$}", "Category");
    for (name, w) in METRIC_NAMES.iter().zip(&col_w) {
        let _ = write!(out, "  {name:>w$}");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{:<label_w$}", row.label);
        for (v, w) in row.report.values().iter().zip(&col_w) {
            let _ = write!(out, "  {:>w$}", cell(*v));
        }
        out.push('\n');
    }
    out
}
