//! Brute-force reference implementations used as test oracles.
#![allow(dead_code)]

use lanekit_core::{BinaryMask, ImageGrid, InstanceMap, LanePolyline, Point};
use rand::Rng;

/// Squared distance from a pixel center to a segment, endpoints in canonical order.
pub fn seg_dist2(px: f64, py: f64, a: Point, b: Point) -> f64 {
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

/// Tests every pixel of the grid against every segment.
pub fn brute_raster(lane: &LanePolyline, width: u32, grid: ImageGrid) -> Vec<bool> {
    let r = width as f64 / 2.0;
    let mut out = vec![false; grid.len()];
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            out[grid.index(x, y)] = lane
                .points()
                .windows(2)
                .any(|s| seg_dist2(x as f64, y as f64, s[0], s[1]) <= r * r);
        }
    }
    out
}

pub fn mask_bits(mask: &BinaryMask) -> Vec<bool> {
    (0..mask.grid().len()).map(|i| mask.get_index(i)).collect()
}

/// IoU by counting pixels one at a time.
pub fn brute_iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Largest number of one-to-one pairs with IoU strictly above `threshold`,
/// found by trying every matching.
pub fn brute_max_matching(iou: &[Vec<f64>], threshold: f64) -> usize {
    fn go(row: usize, iou: &[Vec<f64>], thr: f64, used: &mut Vec<bool>) -> usize {
        if row == iou.len() {
            return 0;
        }
        let mut best = go(row + 1, iou, thr, used);
        for j in 0..used.len() {
            if !used[j] && iou[row][j] > thr {
                used[j] = true;
                best = best.max(1 + go(row + 1, iou, thr, used));
                used[j] = false;
            }
        }
        best
    }
    let cols = iou.first().map_or(0, Vec::len);
    go(0, iou, threshold, &mut vec![false; cols])
}

/// Best total IoU over all maximum-cardinality matchings.
pub fn brute_best_total(iou: &[Vec<f64>], threshold: f64) -> (usize, f64) {
    fn go(row: usize, iou: &[Vec<f64>], thr: f64, used: &mut Vec<bool>) -> (usize, f64) {
        if row == iou.len() {
            return (0, 0.0);
        }
        let mut best = go(row + 1, iou, thr, used);
        for j in 0..used.len() {
            if !used[j] && iou[row][j] > thr {
                used[j] = true;
                let (n, s) = go(row + 1, iou, thr, used);
                let cand = (n + 1, s + iou[row][j]);
                if cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1) {
                    best = cand;
                }
                used[j] = false;
            }
        }
        best
    }
    let cols = iou.first().map_or(0, Vec::len);
    go(0, iou, threshold, &mut vec![false; cols])
}

/// Adjusted Rand index by enumerating every pixel pair.
pub fn brute_ari(a: &InstanceMap, b: &InstanceMap) -> f64 {
    let pix: Vec<(u32, u32)> = a
        .labels()
        .iter()
        .zip(b.labels())
        .filter(|(x, y)| **x != 0 && **y != 0)
        .map(|(x, y)| (*x, *y))
        .collect();
    let (mut both, mut in_a, mut in_b, mut total) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..pix.len() {
        for j in i + 1..pix.len() {
            let sa = pix[i].0 == pix[j].0;
            let sb = pix[i].1 == pix[j].1;
            both += (sa && sb) as u8 as f64;
            in_a += sa as u8 as f64;
            in_b += sb as u8 as f64;
            total += 1.0;
        }
    }
    let expected = in_a * in_b / total;
    let max = (in_a + in_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

/// Polyline with `2..=max_points` points, y strictly increasing, spilling a
/// little past the grid on every side.
pub fn random_lane<R: Rng>(rng: &mut R, grid: ImageGrid, max_points: usize) -> LanePolyline {
    let n = rng.random_range(2..=max_points);
    let (w, h) = (grid.width() as f64, grid.height() as f64);
    let mut ys: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..h + 10.0)).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    if ys.len() < 2 {
        ys = vec![0.0, h - 1.0];
    }
    LanePolyline::new(
        ys.into_iter()
            .map(|y| Point::new(rng.random_range(-20.0..w + 20.0), y))
            .collect(),
    )
}

/// A copy of `lane` with every x shifted by `dx`.
pub fn shifted(lane: &LanePolyline, dx: f64) -> LanePolyline {
    LanePolyline::new(lane.points().iter().map(|p| Point::new(p.x + dx, p.y)).collect())
}
