//! TuSimple JSON-lines annotations.
//!
//! One JSON object per line with `lanes` (per-lane x lists), `h_samples`
//! (row y values) and `raw_file`. A lane entry of -2 marks no lane at that row.
//! Unknown keys such as `run_time` are ignored.

use std::io::{BufRead, Write};

use serde::Deserialize;

use crate::error::FormatError;
use crate::metrics::TuSimpleFrame;

/// One parsed line.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TuSimpleRecord {
    pub lanes: Vec<Vec<f64>>,
    pub h_samples: Vec<f64>,
    pub raw_file: String,
}

impl TuSimpleRecord {
    /// Frame with these lanes as ground truth and no predictions.
    pub fn into_frame(self) -> TuSimpleFrame {
        TuSimpleFrame {
            raw_file: self.raw_file,
            h_samples: self.h_samples,
            gt_lanes: self.lanes,
            pred_lanes: Vec::new(),
        }
    }
}

/// Streaming reader over a JSON-lines source. Blank lines are skipped.
pub struct TuSimpleReader<R> {
    reader: R,
    path: String,
    line: usize,
    buf: String,
}

/// Streams records from `reader`; `path` only labels errors.
pub fn parse_tusimple<R: BufRead>(reader: R, path: impl Into<String>) -> TuSimpleReader<R> {
    TuSimpleReader {
        reader,
        path: path.into(),
        line: 0,
        buf: String::new(),
    }
}

impl<R: BufRead> Iterator for TuSimpleReader<R> {
    type Item = Result<TuSimpleRecord, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(FormatError::parse(&self.path, self.line, e.to_string()))),
            }
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            return Some(parse_record(text, &self.path, self.line));
        }
    }
}

fn parse_record(text: &str, path: &str, line: usize) -> Result<TuSimpleRecord, FormatError> {
    let record: TuSimpleRecord =
        serde_json::from_str(text).map_err(|e| FormatError::parse(path, line, format!("malformed JSON: {e}")))?;
    let expected = record.h_samples.len();
    for (i, lane) in record.lanes.iter().enumerate() {
        if lane.len() != expected {
            return Err(FormatError::parse(
                path,
                line,
                format!("lane {i} has {} x values but h_samples has {expected}", lane.len()),
            ));
        }
        if lane.iter().any(|x| !x.is_finite()) {
            return Err(FormatError::parse(
                path,
                line,
                format!("lane {i} has a non-finite x value"),
            ));
        }
    }
    Ok(record)
}

/// Reads every record, failing on the first bad line.
pub fn read_tusimple<R: BufRead>(reader: R, path: &str) -> Result<Vec<TuSimpleRecord>, FormatError> {
    parse_tusimple(reader, path).collect()
}

fn push_number(out: &mut String, v: f64) {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        out.push_str(&(v as i64).to_string());
    } else {
        out.push_str(&serde_json::to_string(&v).expect("finite float"));
    }
}

fn push_list(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        push_number(out, *v);
    }
    out.push(']');
}

/// Serializes one record as a single line (with trailing newline).
/// Whole numbers are written without a fractional part.
pub fn format_tusimple_record(lanes: &[Vec<f64>], h_samples: &[f64], raw_file: &str) -> String {
    let mut out = String::from("{\"lanes\": [");
    for (i, lane) in lanes.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        push_list(&mut out, lane);
    }
    out.push_str("], \"h_samples\": ");
    push_list(&mut out, h_samples);
    out.push_str(", \"raw_file\": ");
    out.push_str(&serde_json::to_string(raw_file).expect("string"));
    out.push_str("}\n");
    out
}

pub fn write_tusimple_record<W: Write>(w: &mut W, record: &TuSimpleRecord) -> std::io::Result<()> {
    w.write_all(format_tusimple_record(&record.lanes, &record.h_samples, &record.raw_file).as_bytes())
}

/// Pairs ground-truth and prediction records by `raw_file`.
///
/// A ground-truth image with no prediction record gets zero predicted lanes.
/// Predictions must use the same `h_samples` as their ground truth.
pub fn pair_tusimple(
    gt: Vec<TuSimpleRecord>,
    pred: Vec<TuSimpleRecord>,
    pred_path: &str,
) -> Result<Vec<TuSimpleFrame>, FormatError> {
    let mut by_file = std::collections::HashMap::with_capacity(pred.len());
    for p in pred {
        let name = p.raw_file.clone();
        if by_file.insert(name.clone(), p).is_some() {
            return Err(FormatError::Invalid {
                path: pred_path.to_string(),
                message: format!("duplicate raw_file {name:?}"),
            });
        }
    }
    gt.into_iter()
        .map(|g| {
            let pred_lanes = match by_file.remove(&g.raw_file) {
                Some(p) if p.h_samples != g.h_samples => {
                    return Err(FormatError::Invalid {
                        path: pred_path.to_string(),
                        message: format!("h_samples of {:?} differ from ground truth", g.raw_file),
                    })
                }
                Some(p) => p.lanes,
                None => Vec::new(),
            };
            let mut frame = g.into_frame();
            frame.pred_lanes = pred_lanes;
            Ok(frame)
        })
        .collect()
}
