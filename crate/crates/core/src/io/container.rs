//! Interchange files for embeddings, masks and instance maps.
//!
//! Binary container (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LKIT"
//! 4       4     version (1)
//! 8       4     kind (0 = embedding field, 1 = binary mask)
//! 12      4     height H
//! 16      4     width W
//! 20      4     channels D (1 for masks)
//! 24      4·HWD f32 values, row-major, channels innermost
//! ```
//!
//! Mask values are 0.0 or 1.0; any nonzero value reads as lane.
//!
//! Instance maps are plain text: a header line
//! `lanekit-instances 1 <W> <H> <L>` followed by H lines of W space-separated labels.

use std::io::{BufRead, Read, Write};

use crate::error::FormatError;
use crate::grid::{BinaryMask, ImageGrid, InstanceMap};
use crate::losses::EmbeddingField;

pub const MAGIC: &[u8; 4] = b"LKIT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;
const INSTANCE_HEADER: &str = "lanekit-instances";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Embedding = 0,
    Mask = 1,
}

fn encode(kind: ContainerKind, grid: ImageGrid, dim: usize, values: impl Iterator<Item = f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.len() * dim);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, kind as u32, grid.height(), grid.width(), dim as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Embedding values are narrowed to f32.
pub fn write_embedding<W: Write>(w: &mut W, field: &EmbeddingField) -> std::io::Result<()> {
    let bytes = encode(
        ContainerKind::Embedding,
        field.grid(),
        field.dim(),
        field.as_slice().iter().map(|v| *v as f32),
    );
    w.write_all(&bytes)
}

pub fn write_mask<W: Write>(w: &mut W, mask: &BinaryMask) -> std::io::Result<()> {
    let grid = mask.grid();
    let bytes = encode(
        ContainerKind::Mask,
        grid,
        1,
        (0..grid.len()).map(|i| if mask.get_index(i) { 1.0 } else { 0.0 }),
    );
    w.write_all(&bytes)
}

struct Decoded {
    grid: ImageGrid,
    dim: usize,
    values: Vec<f32>,
}

fn decode<R: Read>(mut r: R, path: &str, expect: ContainerKind) -> Result<Decoded, FormatError> {
    let invalid = |message: String| FormatError::Invalid {
        path: path.to_string(),
        message,
    };
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| invalid(format!("truncated header: {e}")))?;
    if &header[..4] != MAGIC {
        return Err(invalid("bad magic bytes".into()));
    }
    let field = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (version, kind, height, width, dim) = (field(0), field(1), field(2), field(3), field(4));
    if version != VERSION {
        return Err(invalid(format!("unsupported version {version}")));
    }
    if kind != expect as u32 {
        return Err(invalid(format!(
            "expected container kind {}, found {kind}",
            expect as u32
        )));
    }
    let grid = ImageGrid::new(width, height).map_err(|e| invalid(e.to_string()))?;
    if dim == 0 || (expect == ContainerKind::Mask && dim != 1) {
        return Err(invalid(format!("invalid channel count {dim}")));
    }
    let count = grid.len() * dim as usize;
    let mut payload = Vec::with_capacity(count * 4);
    r.read_to_end(&mut payload).map_err(|e| FormatError::Invalid {
        path: path.to_string(),
        message: e.to_string(),
    })?;
    if payload.len() != count * 4 {
        return Err(invalid(format!(
            "payload has {} bytes, header implies {}",
            payload.len(),
            count * 4
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Decoded {
        grid,
        dim: dim as usize,
        values,
    })
}

pub fn read_embedding<R: Read>(r: R, path: &str) -> Result<EmbeddingField, FormatError> {
    let d = decode(r, path, ContainerKind::Embedding)?;
    EmbeddingField::from_vec(d.grid, d.dim, d.values.into_iter().map(f64::from).collect()).map_err(|e| {
        FormatError::Invalid {
            path: path.to_string(),
            message: e.to_string(),
        }
    })
}

pub fn read_mask<R: Read>(r: R, path: &str) -> Result<BinaryMask, FormatError> {
    let d = decode(r, path, ContainerKind::Mask)?;
    let bits: Vec<bool> = d.values.iter().map(|v| *v != 0.0).collect();
    Ok(BinaryMask::from_bools(d.grid, &bits).expect("decoded length matches grid"))
}

pub fn format_instances(map: &InstanceMap) -> String {
    let grid = map.grid();
    let mut out = format!(
        "{INSTANCE_HEADER} {VERSION} {} {} {}\n",
        grid.width(),
        grid.height(),
        map.instance_count()
    );
    for row in map.labels().chunks(grid.width() as usize) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_instances<W: Write>(w: &mut W, map: &InstanceMap) -> std::io::Result<()> {
    w.write_all(format_instances(map).as_bytes())
}

pub fn read_instances<R: BufRead>(r: R, path: &str) -> Result<InstanceMap, FormatError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| FormatError::parse(path, 1, "empty file"))?
        .map_err(|e| FormatError::parse(path, 1, e.to_string()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let nums: Option<Vec<u32>> = parts
        .get(1..)
        .map(|p| p.iter().filter_map(|t| t.parse().ok()).collect());
    let (width, height) = match (parts.first(), nums.as_deref()) {
        (Some(&INSTANCE_HEADER), Some(&[1, w, h, _])) => (w, h),
        _ => return Err(FormatError::parse(path, 1, "bad instance-map header")),
    };
    let grid = ImageGrid::new(width, height).map_err(|e| FormatError::parse(path, 1, e.to_string()))?;
    let mut labels = Vec::with_capacity(grid.len());
    for y in 0..height as usize {
        let lineno = y + 2;
        let line = lines
            .next()
            .ok_or_else(|| FormatError::parse(path, lineno, "missing row"))?
            .map_err(|e| FormatError::parse(path, lineno, e.to_string()))?;
        let row: Result<Vec<u32>, _> = line.split_whitespace().map(str::parse).collect();
        let row = row.map_err(|e| FormatError::parse(path, lineno, e.to_string()))?;
        if row.len() != width as usize {
            return Err(FormatError::parse(
                path,
                lineno,
                format!("row has {} labels, expected {width}", row.len()),
            ));
        }
        labels.extend(row);
    }
    Ok(InstanceMap::from_labels(grid, labels).expect("row lengths checked"))
}
