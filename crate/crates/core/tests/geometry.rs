mod common;

use common::{brute_iou, brute_raster, mask_bits, random_lane, shifted};
use lanekit_core::geometry::{smooth_point_map_with, KernelShape, POINT_KERNEL_SIZE};
use lanekit_core::{mask_iou, rasterize_lane, smooth_point_map, targets_from_lanes, ImageGrid, LanePolyline, Point};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(w: u32, h: u32) -> ImageGrid {
    ImageGrid::new(w, h).unwrap()
}

#[test]
fn raster_matches_brute_force_on_random_lanes() {
    let g = grid(90, 60);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let lane = random_lane(&mut rng, g, 6);
        let width = rng.random_range(1..=30);
        let mask = rasterize_lane(&lane, width, g).unwrap();
        assert_eq!(
            mask_bits(&mask),
            brute_raster(&lane, width, g),
            "{lane:?} width {width}"
        );
    }
}

#[test]
fn diagonal_width_three() {
    let g = grid(10, 10);
    let lane = LanePolyline::from_xy(&[(0.0, 0.0), (9.0, 9.0)]);
    let mask = rasterize_lane(&lane, 3, g).unwrap();
    let oracle = brute_raster(&lane, 3, g);
    assert_eq!(mask.count(), oracle.iter().filter(|b| **b).count());
    assert_eq!(mask_bits(&mask), oracle);
    // (x+2, x) is √2 from the diagonal, (x+3, x) is 3/√2
    assert!(mask.get(2, 0) && !mask.get(3, 0));
}

#[test]
fn iou_matches_pixel_counting() {
    let g = grid(120, 80);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let a = random_lane(&mut rng, g, 5);
        let b = if rng.random_bool(0.5) {
            shifted(&a, rng.random_range(-30.0..30.0))
        } else {
            random_lane(&mut rng, g, 5)
        };
        let width = rng.random_range(1..=30);
        let (ma, mb) = (
            rasterize_lane(&a, width, g).unwrap(),
            rasterize_lane(&b, width, g).unwrap(),
        );
        let expected = brute_iou(&brute_raster(&a, width, g), &brute_raster(&b, width, g));
        assert_eq!(mask_iou(&ma, &mb).unwrap(), expected);
    }
}

#[test]
fn parallel_strokes_offset_by_half_width() {
    let g = ImageGrid::CULANE;
    let a = LanePolyline::from_xy(&[(400.0, 0.0), (400.0, 589.0)]);
    let b = shifted(&a, 15.0);
    let (ma, mb) = (rasterize_lane(&a, 30, g).unwrap(), rasterize_lane(&b, 30, g).unwrap());
    // columns 385..=415 and 400..=430, all 590 rows
    let expected = (16.0 * 590.0) / (46.0 * 590.0);
    assert_eq!(mask_iou(&ma, &mb).unwrap(), expected);
}

#[test]
fn smoothing_matches_summed_stamps() {
    let g = grid(40, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let n = rng.random_range(0..30);
        let pts: Vec<(i64, i64)> = (0..n)
            .map(|_| (rng.random_range(0..40), rng.random_range(0..30)))
            .collect();
        let map = smooth_point_map(&pts, g).unwrap();
        let half = (POINT_KERNEL_SIZE / 2) as i64;
        for y in 0..30i64 {
            for x in 0..40i64 {
                let mut v = 0.0;
                for &(px, py) in &pts {
                    if (x - px).abs() <= half && (y - py).abs() <= half {
                        v += 1.0 / 121.0;
                    }
                }
                assert_eq!(map.get(x as u32, y as u32), v);
            }
        }
    }
}

#[test]
fn interior_point_mass_is_one() {
    let g = grid(40, 30);
    for kernel in [KernelShape::Box, KernelShape::Gaussian { sigma: 2.0 }] {
        let map = smooth_point_map_with(&[(20, 15)], g, kernel).unwrap();
        assert!((map.total() - 1.0).abs() < 1e-12);
        let corner = smooth_point_map_with(&[(0, 0)], g, kernel).unwrap();
        assert!(corner.total() < 1.0);
    }
}

#[test]
fn targets_label_lanes_in_order() {
    let g = grid(30, 20);
    let lanes = vec![
        LanePolyline::from_xy(&[(5.0, 0.0), (5.0, 19.0)]),
        LanePolyline::from_xy(&[(20.0, 0.0), (20.0, 19.0)]),
    ];
    let (mask, inst) = targets_from_lanes(&lanes, 3, g).unwrap();
    assert_eq!(mask.count(), 2 * 3 * 20);
    assert_eq!(inst.get(5, 7), 1);
    assert_eq!(inst.get(21, 7), 2);
    assert_eq!(inst.get(12, 7), 0);
    assert_eq!(inst.support(), mask);
}

fn arb_lane() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..60.0f64, 0.0..40.0f64), 2..6).prop_map(|mut pts| {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        pts
    })
}

proptest! {
    #[test]
    fn reversal_does_not_change_raster(pts in arb_lane(), width in 1u32..20) {
        let g = grid(70, 50);
        let lane = LanePolyline::from_xy(&pts);
        prop_assert_eq!(
            rasterize_lane(&lane, width, g).unwrap(),
            rasterize_lane(&lane.reversed(), width, g).unwrap()
        );
    }

    #[test]
    fn integer_translation_shifts_raster(pts in arb_lane(), width in 1u32..10, dx in 0i64..20, dy in 0i64..20) {
        // quarter-pixel coordinates keep differences exact; the lane stays
        // clear of the border in both positions
        let g = grid(120, 100);
        let q = |v: f64| (v * 4.0).round() / 4.0;
        let lane = LanePolyline::new(pts.iter().map(|(x, y)| Point::new(q(*x) + 15.0, q(*y) + 15.0)).collect());
        let moved = LanePolyline::new(
            lane.points().iter().map(|p| Point::new(p.x + dx as f64, p.y + dy as f64)).collect(),
        );
        let a = rasterize_lane(&lane, width, g).unwrap();
        let b = rasterize_lane(&moved, width, g).unwrap();
        prop_assert_eq!(a.count(), b.count());
        for i in a.iter_set() {
            let (x, y) = g.coords(i);
            prop_assert!(b.get(x + dx as u32, y + dy as u32));
        }
    }

    #[test]
    fn iou_symmetric_and_bounded(a in arb_lane(), b in arb_lane(), width in 1u32..20) {
        let g = grid(70, 50);
        let ma = rasterize_lane(&LanePolyline::from_xy(&a), width, g).unwrap();
        let mb = rasterize_lane(&LanePolyline::from_xy(&b), width, g).unwrap();
        let ab = mask_iou(&ma, &mb).unwrap();
        prop_assert_eq!(ab, mask_iou(&mb, &ma).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        if !ma.is_blank() {
            prop_assert_eq!(mask_iou(&ma, &ma).unwrap(), 1.0);
        }
    }

    #[test]
    fn wider_strokes_cover_narrower(pts in arb_lane(), width in 1u32..20) {
        let g = grid(70, 50);
        let lane = LanePolyline::from_xy(&pts);
        let thin = rasterize_lane(&lane, width, g).unwrap();
        let thick = rasterize_lane(&lane, width + 1, g).unwrap();
        for i in thin.iter_set() {
            prop_assert!(thick.get_index(i));
        }
    }
}

#[test]
fn translation_keeps_boundary_pixels() {
    // a pixel sits exactly on the stroke edge here; it must stay inside
    // after the shift
    let g = grid(120, 100);
    let lane = LanePolyline::from_xy(&[(58.0, 24.0), (73.0, 32.0)]);
    let moved = LanePolyline::from_xy(&[(60.0, 24.0), (75.0, 32.0)]);
    let a = rasterize_lane(&lane, 6, g).unwrap();
    let b = rasterize_lane(&moved, 6, g).unwrap();
    assert_eq!(a.count(), b.count());
    for i in a.iter_set() {
        let (x, y) = g.coords(i);
        assert!(b.get(x + 2, y));
    }
}
