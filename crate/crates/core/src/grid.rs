//! Raster containers shared by every stage of the pipeline.
//!
//! All maps are stored row-major: pixel `(x, y)` lives at index `y * width + x`.
//! Pixel `(x, y)` has its center at the real coordinate `(x, y)`.

use serde::{Deserialize, Serialize};

use crate::error::GridError;

/// Dimensions of an image in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageGrid {
    width: u32,
    height: u32,
}

impl ImageGrid {
    /// CULane native resolution.
    pub const CULANE: ImageGrid = ImageGrid {
        width: 1640,
        height: 590,
    };
    /// TuSimple native resolution.
    pub const TUSIMPLE: ImageGrid = ImageGrid {
        width: 1280,
        height: 720,
    };

    pub fn new(width: u32, height: u32) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::EmptyGrid { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (u32, u32) {
        let w = self.width as usize;
        ((index % w) as u32, (index / w) as u32)
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    pub(crate) fn ensure_same(&self, other: &ImageGrid) -> Result<(), GridError> {
        if self != other {
            return Err(GridError::Mismatch {
                left: *self,
                right: *other,
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for ImageGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl std::str::FromStr for ImageGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
        let w: u32 = w.trim().parse().map_err(|e| format!("bad width: {e}"))?;
        let h: u32 = h.trim().parse().map_err(|e| format!("bad height: {e}"))?;
        ImageGrid::new(w, h).map_err(|e| e.to_string())
    }
}

/// Per-pixel lane/background map, bit-packed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    grid: ImageGrid,
    words: Vec<u64>,
}

impl BinaryMask {
    pub fn empty(grid: ImageGrid) -> Self {
        Self {
            grid,
            words: vec![0; grid.len().div_ceil(64)],
        }
    }

    pub fn from_bools(grid: ImageGrid, bits: &[bool]) -> Result<Self, GridError> {
        if bits.len() != grid.len() {
            return Err(GridError::Shape { grid, len: bits.len() });
        }
        let mut mask = Self::empty(grid);
        for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            mask.set_index(i);
        }
        Ok(mask)
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.get_index(self.grid.index(x, y))
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32) {
        let i = self.grid.index(x, y);
        self.set_index(i);
    }

    #[inline]
    pub fn set_index(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_blank(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    /// Row-major indices of set pixels.
    pub fn iter_set(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    pub fn union_with(&mut self, other: &BinaryMask) -> Result<(), GridError> {
        self.grid.ensure_same(&other.grid)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
        Ok(())
    }

    /// `(|a ∧ b|, |a ∨ b|)`.
    pub(crate) fn overlap_counts(&self, other: &BinaryMask) -> Result<(usize, usize), GridError> {
        self.grid.ensure_same(&other.grid)?;
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.words.iter().zip(&other.words) {
            inter += (a & b).count_ones() as usize;
            union += (a | b).count_ones() as usize;
        }
        Ok((inter, union))
    }
}

/// Drivable-road region. Carried through the data model only; nothing in
/// this crate learns or predicts it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrivableMask(BinaryMask);

impl DrivableMask {
    pub fn new(mask: BinaryMask) -> Self {
        Self(mask)
    }

    pub fn grid(&self) -> ImageGrid {
        self.0.grid()
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.0
    }
}

/// Per-pixel instance labels; 0 is background, `1..=L` are lane instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap {
    grid: ImageGrid,
    labels: Vec<u32>,
}

impl InstanceMap {
    pub fn zeros(grid: ImageGrid) -> Self {
        Self {
            grid,
            labels: vec![0; grid.len()],
        }
    }

    pub fn from_labels(grid: ImageGrid, labels: Vec<u32>) -> Result<Self, GridError> {
        if labels.len() != grid.len() {
            return Err(GridError::Shape {
                grid,
                len: labels.len(),
            });
        }
        Ok(Self { grid, labels })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[self.grid.index(x, y)]
    }

    #[inline]
    pub(crate) fn set_index(&mut self, i: usize, label: u32) {
        self.labels[i] = label;
    }

    /// Largest label present (L when labels are contiguous).
    pub fn instance_count(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// True when the nonzero labels are exactly `1..=L` for some L ≥ 0.
    pub fn is_contiguous(&self) -> bool {
        let l = self.instance_count() as usize;
        let mut seen = vec![false; l + 1];
        for &label in &self.labels {
            seen[label as usize] = true;
        }
        seen[1..].iter().all(|s| *s)
    }

    /// Support of the nonzero labels.
    pub fn support(&self) -> BinaryMask {
        let mut mask = BinaryMask::empty(self.grid);
        for (i, _) in self.labels.iter().enumerate().filter(|(_, l)| **l != 0) {
            mask.set_index(i);
        }
        mask
    }

    /// Pixel count per label, indexed by label (entry 0 is background).
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.instance_count() as usize + 1];
        for &label in &self.labels {
            counts[label as usize] += 1;
        }
        counts
    }
}

/// Non-negative regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    grid: ImageGrid,
    values: Vec<f64>,
}

impl HeatMap {
    pub fn zeros(grid: ImageGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Wraps raw values; rejects negative or non-finite entries.
    pub fn from_values(grid: ImageGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Shape {
                grid,
                len: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(GridError::InvalidValue {
                index: i,
                value: values[i],
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[self.grid.index(x, y)]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}
