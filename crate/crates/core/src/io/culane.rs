//! CULane-style annotations.
//!
//! * `.lines.txt`: one lane per line, whitespace-separated `x y` pairs.
//! * list file: one frame path per line, relative to the dataset root
//!   (a leading `/` is tolerated).
//! * category sidecar: one `path-prefix category` pair per line; the longest
//!   matching prefix wins and unmatched frames are `normal`. `#` starts a comment.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::FormatError;
use crate::geometry::{LanePolyline, Point};
use crate::grid::ImageGrid;
use crate::metrics::{Category, CulaneFrame};

/// Parses one `.lines.txt` stream. Blank lines are skipped; points are sorted by y.
pub fn parse_lines<R: BufRead>(reader: R, path: &str) -> Result<Vec<LanePolyline>, FormatError> {
    let mut lanes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| FormatError::parse(path, lineno, e.to_string()))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if !tokens.len().is_multiple_of(2) {
            return Err(FormatError::parse(
                path,
                lineno,
                format!("odd number of coordinates ({})", tokens.len()),
            ));
        }
        let mut values = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let v: f64 = tok
                .parse()
                .map_err(|_| FormatError::parse(path, lineno, format!("not a number: {tok:?}")))?;
            if !v.is_finite() {
                return Err(FormatError::parse(
                    path,
                    lineno,
                    format!("non-finite coordinate {tok:?}"),
                ));
            }
            values.push(v);
        }
        let points = values.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
        lanes.push(LanePolyline::new(points).sorted_by_y());
    }
    Ok(lanes)
}

/// Formats lanes in `.lines.txt` layout, points in stored order.
pub fn format_lines(lanes: &[LanePolyline]) -> String {
    let mut out = String::new();
    for lane in lanes {
        let mut first = true;
        for p in lane.points() {
            if !first {
                out.push(' ');
            }
            first = false;
            out.push_str(&format!("{} {}", p.x, p.y));
        }
        out.push('\n');
    }
    out
}

pub fn write_lines<W: Write>(w: &mut W, lanes: &[LanePolyline]) -> std::io::Result<()> {
    w.write_all(format_lines(lanes).as_bytes())
}

pub fn read_lines_file(path: &Path) -> Result<Vec<LanePolyline>, FormatError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    parse_lines(BufReader::new(file), &path.display().to_string())
}

/// Annotation path of a frame: the image extension becomes `.lines.txt`.
pub fn lines_path(root: &Path, frame: &str) -> PathBuf {
    let rel = frame.trim_start_matches('/');
    let stem = match rel.rfind('.') {
        Some(dot) if !rel[dot..].contains('/') => &rel[..dot],
        _ => rel,
    };
    root.join(format!("{stem}.lines.txt"))
}

/// Path-prefix to category table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMap {
    entries: Vec<(String, Category)>,
}

impl CategoryMap {
    pub fn parse<R: BufRead>(reader: R, path: &str) -> Result<Self, FormatError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| FormatError::parse(path, lineno, e.to_string()))?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut parts = content.split_whitespace();
            let (Some(prefix), Some(cat), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(FormatError::parse(path, lineno, "expected `path-prefix category`"));
            };
            let category: Category = cat.parse().map_err(|e: String| FormatError::parse(path, lineno, e))?;
            entries.push((prefix.trim_start_matches('/').to_string(), category));
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, prefix: impl Into<String>, category: Category) {
        let prefix: String = prefix.into();
        self.entries
            .push((prefix.trim_start_matches('/').to_string(), category));
    }

    /// Category of the longest matching prefix.
    pub fn lookup(&self, frame: &str) -> Option<Category> {
        let frame = frame.trim_start_matches('/');
        self.entries
            .iter()
            .filter(|(prefix, _)| frame.starts_with(prefix.as_str()))
            .max_by_key(|(prefix, _)| prefix.len())
            .map(|(_, c)| *c)
    }

    /// Serialized sidecar, one entry per line.
    pub fn format(&self) -> String {
        self.entries.iter().map(|(p, c)| format!("{p} {c}\n")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub annotation: PathBuf,
    pub category: Option<Category>,
}

/// Frames of a dataset, in list-file order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Builds the manifest from a list file. Frame ids must be unique.
    pub fn from_list<R: BufRead>(
        root: &Path,
        list: R,
        list_path: &str,
        categories: Option<&CategoryMap>,
    ) -> Result<Self, FormatError> {
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for (i, line) in list.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| FormatError::parse(list_path, lineno, e.to_string()))?;
            let Some(id) = line.split_whitespace().next() else {
                continue;
            };
            if !seen.insert(id.to_string()) {
                return Err(FormatError::parse(list_path, lineno, format!("duplicate frame {id:?}")));
            }
            entries.push(ManifestEntry {
                id: id.to_string(),
                annotation: lines_path(root, id),
                category: categories.and_then(|c| c.lookup(id)),
            });
        }
        Ok(Self {
            root: root.to_path_buf(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// What to do when a prediction file is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPrediction {
    /// Treat as a frame with no predicted lanes.
    #[default]
    Empty,
    /// Fail.
    Error,
}

/// A loaded frame and whether its prediction file was absent.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedFrame {
    pub frame: CulaneFrame,
    pub prediction_missing: bool,
}

/// Loads ground truth and prediction for one manifest entry.
pub fn load_frame(
    entry: &ManifestEntry,
    pred_root: &Path,
    grid: ImageGrid,
    missing: MissingPrediction,
) -> Result<LoadedFrame, FormatError> {
    let gt = read_lines_file(&entry.annotation)?;
    let pred_path = lines_path(pred_root, &entry.id);
    let (pred, prediction_missing) = match read_lines_file(&pred_path) {
        Ok(p) => (p, false),
        Err(FormatError::Io { source, .. })
            if source.kind() == std::io::ErrorKind::NotFound && missing == MissingPrediction::Empty =>
        {
            (Vec::new(), true)
        }
        Err(e) => return Err(e),
    };
    let category = entry.category.unwrap_or(Category::Normal);
    let frame = CulaneFrame::new(entry.id.clone(), grid, category, gt, pred).map_err(|e| FormatError::Invalid {
        path: entry.annotation.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(LoadedFrame {
        frame,
        prediction_missing,
    })
}

/// Streams frames listed in `manifest`, pairing them with predictions under `pred_root`.
pub fn parse_culane<'a>(
    manifest: &'a DatasetManifest,
    pred_root: &'a Path,
    grid: ImageGrid,
    missing: MissingPrediction,
) -> impl Iterator<Item = Result<LoadedFrame, FormatError>> + 'a {
    manifest
        .entries
        .iter()
        .map(move |e| load_frame(e, pred_root, grid, missing))
}
