//! Parameter-free grouping of lane pixels into instances.
//!
//! Pick an unassigned lane pixel, give it a fresh instance id, and give the
//! same id to every still-unassigned lane pixel whose embedding lies strictly
//! closer than the radius (Euclidean). Repeat until every lane pixel has an id.
//! Once assigned, a pixel is never revisited.
//!
//! When each pixel is within δ_v of its instance mean and the means are more
//! than 6δ_v apart, radius 2δ_v recovers the instances exactly whatever
//! pixels are picked: same-instance pairs are closer than 2δ_v, and
//! cross-instance pairs are farther than 4δ_v.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ClusterError, GridError};
use crate::grid::{BinaryMask, InstanceMap};
use crate::losses::EmbeddingField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub radius: f64,
    pub seed: u64,
    /// Pick the lowest row-major unassigned pixel instead of a random one.
    pub deterministic: bool,
    /// Instances smaller than this are dropped back to background.
    /// 0 or 1 keeps everything.
    pub min_pixels: usize,
}

impl ClusterConfig {
    pub fn new(radius: f64) -> Self {
        Self {
            radius,
            seed: 0,
            deterministic: false,
            min_pixels: 0,
        }
    }

    /// Radius `2 * delta_v`.
    pub fn from_delta_v(delta_v: f64) -> Self {
        Self::new(2.0 * delta_v)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn deterministic(mut self, on: bool) -> Self {
        self.deterministic = on;
        self
    }

    pub fn with_min_pixels(mut self, min_pixels: usize) -> Self {
        self.min_pixels = min_pixels;
        self
    }
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Labels every pixel of `mask`; returns the map and the instance count L.
pub fn threshold_cluster(
    field: &EmbeddingField,
    mask: &BinaryMask,
    config: &ClusterConfig,
) -> Result<(InstanceMap, u32), ClusterError> {
    if field.grid() != mask.grid() {
        return Err(ClusterError::Grid(GridError::Mismatch {
            left: field.grid(),
            right: mask.grid(),
        }));
    }
    if !(config.radius > 0.0 && config.radius.is_finite()) {
        return Err(ClusterError::InvalidRadius(config.radius));
    }
    let r2 = config.radius * config.radius;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut labels = vec![0u32; mask.grid().len()];
    // kept in increasing pixel order; retain() preserves it
    let mut unassigned: Vec<usize> = mask.iter_set().collect();
    let mut next = 0u32;
    while !unassigned.is_empty() {
        let pick = if config.deterministic {
            0
        } else {
            rng.random_range(0..unassigned.len())
        };
        let seed_vec = field.vector(unassigned[pick]);
        next += 1;
        labels[unassigned[pick]] = next;
        unassigned.retain(|&p| {
            if labels[p] == 0 && dist2(field.vector(p), seed_vec) < r2 {
                labels[p] = next;
                false
            } else {
                labels[p] == 0
            }
        });
    }
    let mut map = InstanceMap::from_labels(mask.grid(), labels)?;
    if config.min_pixels > 1 {
        map = drop_small(map, config.min_pixels);
    }
    let count = map.instance_count();
    Ok((map, count))
}

fn drop_small(map: InstanceMap, min_pixels: usize) -> InstanceMap {
    let counts = map.label_counts();
    let mut remap = vec![0u32; counts.len()];
    let mut next = 0;
    for (label, &n) in counts.iter().enumerate().skip(1) {
        if n >= min_pixels {
            next += 1;
            remap[label] = next;
        }
    }
    let labels = map.labels().iter().map(|l| remap[*l as usize]).collect();
    InstanceMap::from_labels(map.grid(), labels).expect("same grid")
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings, over pixels labelled in both.
pub fn partition_agreement(a: &InstanceMap, b: &InstanceMap) -> Result<f64, ClusterError> {
    a.grid().ensure_same(&b.grid())?;
    let mut table: HashMap<(u32, u32), u64> = HashMap::new();
    let mut rows: HashMap<u32, u64> = HashMap::new();
    let mut cols: HashMap<u32, u64> = HashMap::new();
    let mut n = 0u64;
    for (&la, &lb) in a.labels().iter().zip(b.labels()) {
        if la == 0 || lb == 0 {
            continue;
        }
        *table.entry((la, lb)).or_default() += 1;
        *rows.entry(la).or_default() += 1;
        *cols.entry(lb).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return Err(ClusterError::EmptyOverlap);
    }
    Ok(ari_from_counts(
        table.values().copied(),
        rows.values().copied(),
        cols.values().copied(),
        n,
    ))
}

/// Adjusted Rand index from a contingency table and its marginals.
pub fn ari_from_counts(
    cells: impl Iterator<Item = u64>,
    rows: impl Iterator<Item = u64>,
    cols: impl Iterator<Item = u64>,
    n: u64,
) -> f64 {
    let index: f64 = cells.map(pairs).sum();
    let sum_a: f64 = rows.map(pairs).sum();
    let sum_b: f64 = cols.map(pairs).sum();
    let total = pairs(n);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = (sum_a + sum_b) / 2.0;
    let denom = max - expected;
    if denom == 0.0 {
        // both partitions are a single block or all singletons: identical
        return 1.0;
    }
    (index - expected) / denom
}
