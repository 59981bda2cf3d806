//! Lane annotations to raster targets.
//!
//! A lane of width `w` covers every pixel whose center lies within `w / 2`
//! (Euclidean) of some segment of its polyline.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::grid::{BinaryMask, HeatMap, ImageGrid, InstanceMap};

/// Side length of the point-map smoothing kernel.
pub const POINT_KERNEL_SIZE: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// Ordered lane points in pixel units.
///
/// Annotations come sorted by increasing `y`; see [`LanePolyline::sorted_by_y`].
/// Rendering does not depend on point order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LanePolyline {
    points: Vec<Point>,
}

impl LanePolyline {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn from_xy(points: &[(f64, f64)]) -> Self {
        Self::new(points.iter().copied().map(Point::from).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Stable sort by `y`.
    pub fn sorted_by_y(mut self) -> Self {
        self.points.sort_by(|a, b| a.y.total_cmp(&b.y));
        self
    }

    pub fn is_strictly_increasing_in_y(&self) -> bool {
        self.points.windows(2).all(|w| w[0].y < w[1].y)
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self { points }
    }
}

/// Squared distance from `p` to the segment `a`-`b`.
///
/// Endpoints are put into a canonical order first so the result does not
/// depend on segment direction down to the last bit.
#[inline]
pub(crate) fn segment_dist2(px: f64, py: f64, a: Point, b: Point) -> f64 {
    let (a, b) = if (a.y, a.x) <= (b.y, b.x) { (a, b) } else { (b, a) };
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    // offsets relative to `a`, so an integer shift of the whole lane leaves
    // every intermediate value unchanged
    let (rx, ry) = (px - a.x, py - a.y);
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((rx * dx + ry * dy) / len2).clamp(0.0, 1.0)
    };
    let ex = rx - t * dx;
    let ey = ry - t * dy;
    ex * ex + ey * ey
}

fn stamp_segment(mask: &mut BinaryMask, a: Point, b: Point, radius: f64) {
    let grid = mask.grid();
    let (w, h) = (grid.width() as i64, grid.height() as i64);
    let r2 = radius * radius;
    // One pixel of slack around every analytic bound; the exact distance
    // test below is the only thing that decides membership.
    let slack = radius + 1.0;
    let y_lo = ((a.y.min(b.y) - slack).floor() as i64).max(0);
    let y_hi = ((a.y.max(b.y) + slack).ceil() as i64).min(h - 1);
    let dy = b.y - a.y;
    for row in y_lo..=y_hi {
        let yf = row as f64;
        let (t0, t1) = if dy == 0.0 {
            (0.0, 1.0)
        } else {
            let ta = (yf - slack - a.y) / dy;
            let tb = (yf + slack - a.y) / dy;
            (ta.min(tb).max(0.0), ta.max(tb).min(1.0))
        };
        if t0 > t1 {
            continue;
        }
        let xa = a.x + t0 * (b.x - a.x);
        let xb = a.x + t1 * (b.x - a.x);
        let x_lo = ((xa.min(xb) - slack).floor() as i64).max(0);
        let x_hi = ((xa.max(xb) + slack).ceil() as i64).min(w - 1);
        for col in x_lo..=x_hi {
            if segment_dist2(col as f64, yf, a, b) <= r2 {
                mask.set(col as u32, row as u32);
            }
        }
    }
}

/// Renders a lane as a band of the given pixel width.
pub fn rasterize_lane(lane: &LanePolyline, width: u32, grid: ImageGrid) -> Result<BinaryMask, GeometryError> {
    if lane.len() < 2 {
        return Err(GeometryError::DegeneratePolyline { points: lane.len() });
    }
    if width == 0 {
        return Err(GeometryError::ZeroWidth);
    }
    if lane.points().iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let radius = width as f64 / 2.0;
    let mut mask = BinaryMask::empty(grid);
    for seg in lane.points().windows(2) {
        stamp_segment(&mut mask, seg[0], seg[1], radius);
    }
    Ok(mask)
}

/// Intersection over union; 0 when both masks are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, GeometryError> {
    let (inter, union) = a.overlap_counts(b)?;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Shape of the 11×11 point-smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum KernelShape {
    /// Every cell 1/121.
    #[default]
    Box,
    /// Sampled Gaussian with the given standard deviation, normalized to unit mass.
    Gaussian { sigma: f64 },
}

impl KernelShape {
    fn weights(&self) -> [[f64; POINT_KERNEL_SIZE]; POINT_KERNEL_SIZE] {
        let n = POINT_KERNEL_SIZE;
        let mut k = [[0.0; POINT_KERNEL_SIZE]; POINT_KERNEL_SIZE];
        match *self {
            KernelShape::Box => {
                let v = 1.0 / (n * n) as f64;
                k.iter_mut().for_each(|row| row.fill(v));
            }
            KernelShape::Gaussian { sigma } => {
                let half = (n / 2) as f64;
                let mut total = 0.0;
                for (i, row) in k.iter_mut().enumerate() {
                    for (j, cell) in row.iter_mut().enumerate() {
                        let dy = i as f64 - half;
                        let dx = j as f64 - half;
                        *cell = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                        total += *cell;
                    }
                }
                k.iter_mut().flatten().for_each(|c| *c /= total);
            }
        }
        k
    }
}

/// Smooths a sparse lane-point map with the default box kernel.
pub fn smooth_point_map(points: &[(i64, i64)], grid: ImageGrid) -> Result<HeatMap, GeometryError> {
    smooth_point_map_with(points, grid, KernelShape::Box)
}

/// Deposits one normalized 11×11 kernel per point. Deposits add up; kernels
/// are cut at the border and not renormalized.
pub fn smooth_point_map_with(
    points: &[(i64, i64)],
    grid: ImageGrid,
    kernel: KernelShape,
) -> Result<HeatMap, GeometryError> {
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !grid.contains(*x, *y)) {
        return Err(GeometryError::PointOutOfBounds { x, y, grid });
    }
    if let KernelShape::Gaussian { sigma } = kernel {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(GeometryError::Grid(crate::error::GridError::InvalidValue {
                index: 0,
                value: sigma,
            }));
        }
    }
    let weights = kernel.weights();
    let half = (POINT_KERNEL_SIZE / 2) as i64;
    let mut map = HeatMap::zeros(grid);
    let values = map.values_mut();
    for &(px, py) in points {
        for (ky, row) in weights.iter().enumerate() {
            let y = py + ky as i64 - half;
            for (kx, &w) in row.iter().enumerate() {
                let x = px + kx as i64 - half;
                if grid.contains(x, y) {
                    values[grid.index(x as u32, y as u32)] += w;
                }
            }
        }
    }
    Ok(map)
}

/// Binary lane target plus per-lane instance labels.
///
/// Lane `k` (0-based) gets label `k + 1`; where lanes overlap the later one wins.
/// A lane fully covered by later lanes leaves its label unused.
pub fn targets_from_lanes(
    lanes: &[LanePolyline],
    width: u32,
    grid: ImageGrid,
) -> Result<(BinaryMask, InstanceMap), GeometryError> {
    let mut union = BinaryMask::empty(grid);
    let mut instances = InstanceMap::zeros(grid);
    for (k, lane) in lanes.iter().enumerate() {
        let mask = rasterize_lane(lane, width, grid)?;
        for i in mask.iter_set() {
            instances.set_index(i, k as u32 + 1);
        }
        union.union_with(&mask)?;
    }
    Ok((union, instances))
}
