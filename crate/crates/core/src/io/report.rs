//! Human-readable tables and structured JSON for evaluation reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::FormatError;
use crate::metrics::{Category, EvalReport, MetricKind, REPORT_SCHEMA};

pub const TABLE_FILE: &str = "report.txt";
pub const JSON_FILE: &str = "report.json";

/// `Accuracy / FP / FN` with four decimals, e.g. `0.9653 / 0.0617 / 0.0180`.
pub fn tusimple_row(report: &EvalReport) -> String {
    let t = &report.totals;
    format!(
        "{:.4} / {:.4} / {:.4}",
        t.accuracy.unwrap_or(0.0),
        t.fp_rate.unwrap_or(0.0),
        t.fn_rate.unwrap_or(0.0)
    )
}

/// Renders the report as a fixed-width table.
///
/// TuSimple: one `Accuracy | FP | FN` row. CULane: one F1 row (in percent)
/// per category, the raw FP count for Crossroad, and a Total row.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    match report.metric {
        MetricKind::Tusimple => {
            let t = &report.totals;
            let _ = writeln!(
                out,
                "TuSimple evaluation: {} frames, x tolerance {} px, lane correctness {}",
                t.frames,
                report.config.x_tolerance.unwrap_or(0.0),
                report.config.lane_correct_fraction.unwrap_or(0.0)
            );
            let _ = writeln!(out, "{:<10} | {:<8} | {:<8} | {:<8}", "", "Accuracy", "FP", "FN");
            let _ = writeln!(out, "{:-<10}-+-{:-<8}-+-{:-<8}-+-{:-<8}", "", "", "", "");
            let _ = writeln!(
                out,
                "{:<10} | {:<8.4} | {:<8.4} | {:<8.4}",
                "lanekit",
                t.accuracy.unwrap_or(0.0),
                t.fp_rate.unwrap_or(0.0),
                t.fn_rate.unwrap_or(0.0)
            );
        }
        MetricKind::Culane => {
            let _ = writeln!(
                out,
                "CULane evaluation: lane width {} px, IoU > {}",
                report.config.lane_width.unwrap_or(0),
                report.config.iou_threshold.unwrap_or(0.0)
            );
            let _ = writeln!(
                out,
                "{:<13} | {:>7} | {:>7} | {:>8} | {:>8} | {:>8}",
                "Category", "F1", "Frames", "TP", "FP", "FN"
            );
            let _ = writeln!(
                out,
                "{:-<13}-+-{:->7}-+-{:->7}-+-{:->8}-+-{:->8}-+-{:->8}",
                "", "", "", "", "", ""
            );
            for row in &report.per_category {
                let s = &row.summary;
                let headline = if row.category == Category::Crossroad {
                    s.counts.fp.to_string()
                } else if s.frames == 0 {
                    "-".to_string()
                } else {
                    format!("{:.1}", 100.0 * s.f1)
                };
                let _ = writeln!(
                    out,
                    "{:<13} | {:>7} | {:>7} | {:>8} | {:>8} | {:>8}",
                    row.category.label(),
                    headline,
                    s.frames,
                    s.counts.tp,
                    s.counts.fp,
                    s.counts.fn_
                );
            }
            let t = &report.totals;
            let _ = writeln!(
                out,
                "{:<13} | {:>7} | {:>7} | {:>8} | {:>8} | {:>8}",
                "Total",
                format!("{:.1}", 100.0 * t.f1),
                t.frames,
                t.counts.tp,
                t.counts.fp,
                t.counts.fn_
            );
        }
    }
    out
}

/// Pretty-printed JSON with a trailing newline.
pub fn report_to_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn report_from_json(text: &str, path: &str) -> Result<EvalReport, FormatError> {
    let report: EvalReport = serde_json::from_str(text).map_err(|e| FormatError::Parse {
        path: path.to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if report.schema != REPORT_SCHEMA {
        return Err(FormatError::Invalid {
            path: path.to_string(),
            message: format!("unsupported schema {}", report.schema),
        });
    }
    Ok(report)
}

/// Writes `report.txt` and `report.json` into `dir`, creating it if needed.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<(PathBuf, PathBuf), FormatError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let table = dir.join(TABLE_FILE);
    let json = dir.join(JSON_FILE);
    std::fs::write(&table, render_table(report)).map_err(|e| FormatError::io(&table, e))?;
    std::fs::write(&json, report_to_json(report)).map_err(|e| FormatError::io(&json, e))?;
    Ok((table, json))
}
