mod common;

use common::brute_ari;
use lanekit_core::synth::{generate_scene, recovery_trial, separation_holds, SceneSpec};
use lanekit_core::{
    partition_agreement, threshold_cluster, BinaryMask, ClusterConfig, EmbeddingField, ImageGrid, InstanceMap,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Field on the separation boundary: centers exactly `delta_d` apart along a
/// line, pixels in ± pairs up to (but below) `delta_v` from their center.
fn tight_field(lanes: usize, per_lane: usize, delta_v: f64, delta_d: f64, seed: u64) -> (EmbeddingField, InstanceMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 3;
    let n = lanes * per_lane * 2;
    let grid = ImageGrid::new(n as u32, 1).unwrap();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for k in 0..lanes {
        for _ in 0..per_lane {
            let dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = rng.random_range(0.0..0.999) * delta_v;
            for sign in [1.0, -1.0] {
                for (d, v) in dir.iter().enumerate() {
                    let center = if d == 0 { k as f64 * delta_d } else { 0.0 };
                    data.push(center + sign * v / norm * r);
                }
                labels.push(k as u32 + 1);
            }
        }
    }
    // interleave lanes across the pixel order
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let data = order
        .iter()
        .flat_map(|&p| data[p * dim..(p + 1) * dim].to_vec())
        .collect();
    let labels = order.iter().map(|&p| labels[p]).collect();
    (
        EmbeddingField::from_vec(grid, dim, data).unwrap(),
        InstanceMap::from_labels(grid, labels).unwrap(),
    )
}

#[test]
fn separated_fields_recover_for_every_start_order() {
    let delta_v = 0.5;
    let delta_d = 6.0 * delta_v + 1e-9;
    let (field, truth) = tight_field(5, 20, delta_v, delta_d, 1);
    assert!(separation_holds(&field, &truth, delta_v));
    let mask = truth.support();
    for seed in 0..1000 {
        let cfg = ClusterConfig::from_delta_v(delta_v).with_seed(seed);
        let (found, count) = threshold_cluster(&field, &mask, &cfg).unwrap();
        assert_eq!(count, 5);
        assert_eq!(partition_agreement(&found, &truth).unwrap(), 1.0, "start seed {seed}");
    }
}

#[test]
fn generated_scenes_cluster_exactly() {
    for seed in 0..20 {
        let spec = SceneSpec::new(ImageGrid::new(160, 60).unwrap(), 1 + (seed as usize % 8), seed);
        let scene = generate_scene(&spec).unwrap();
        let cfg = ClusterConfig::from_delta_v(spec.delta_v).with_seed(seed);
        let (found, count) = threshold_cluster(&scene.field, &scene.mask, &cfg).unwrap();
        assert_eq!(count as usize, spec.lane_count);
        assert_eq!(partition_agreement(&found, &scene.instances).unwrap(), 1.0);
    }
}

#[test]
fn descent_then_clustering_recovers_lanes() {
    let mut recovered = 0;
    for seed in 0..100 {
        let trial = recovery_trial(seed, 500, 0.1).unwrap();
        assert!(trial.ari_before < 1.0, "seed {seed} starts separated");
        recovered += (trial.ari_after == 1.0) as usize;
    }
    assert!(recovered >= 95, "{recovered}/100");
}

#[test]
fn empty_mask_gives_no_instances() {
    let grid = ImageGrid::new(4, 3).unwrap();
    let field = EmbeddingField::zeros(grid, 2).unwrap();
    let (map, count) = threshold_cluster(&field, &BinaryMask::empty(grid), &ClusterConfig::new(1.0)).unwrap();
    assert_eq!(count, 0);
    assert_eq!(map, InstanceMap::zeros(grid));
}

#[test]
fn deterministic_mode_ignores_seed() {
    let scene = generate_scene(&SceneSpec::new(ImageGrid::new(96, 48).unwrap(), 3, 4)).unwrap();
    let run = |seed| {
        threshold_cluster(
            &scene.field,
            &scene.mask,
            &ClusterConfig::new(1.0).with_seed(seed).deterministic(true),
        )
        .unwrap()
    };
    assert_eq!(run(1), run(2));
}

#[test]
fn random_partitions_average_zero() {
    let grid = ImageGrid::new(1000, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut total = 0.0;
    for _ in 0..100 {
        let mut draw = || {
            let labels = (0..1000).map(|_| rng.random_range(1..=2)).collect();
            InstanceMap::from_labels(grid, labels).unwrap()
        };
        let (a, b) = (draw(), draw());
        total += partition_agreement(&a, &b).unwrap();
    }
    let mean = total / 100.0;
    assert!(mean.abs() <= 0.05, "{mean}");
}

#[test]
fn disjoint_support_is_an_error() {
    let grid = ImageGrid::new(2, 1).unwrap();
    let a = InstanceMap::from_labels(grid, vec![1, 0]).unwrap();
    let b = InstanceMap::from_labels(grid, vec![0, 1]).unwrap();
    let err = partition_agreement(&a, &b).unwrap_err();
    assert!(err.to_string().contains("empty overlap"));
}

fn arb_labels() -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
    (2usize..60).prop_flat_map(|n| (prop::collection::vec(0u32..5, n), prop::collection::vec(0u32..5, n)))
}

fn map(labels: &[u32]) -> InstanceMap {
    InstanceMap::from_labels(ImageGrid::new(labels.len() as u32, 1).unwrap(), labels.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn ari_matches_pair_counting((a, b) in arb_labels()) {
        let common = a.iter().zip(&b).filter(|(x, y)| **x != 0 && **y != 0).count();
        prop_assume!(common >= 2);
        let got = partition_agreement(&map(&a), &map(&b)).unwrap();
        let expected = brute_ari(&map(&a), &map(&b));
        prop_assert!((got - expected).abs() <= 1e-12, "{} vs {}", got, expected);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&got));
    }

    #[test]
    fn ari_symmetric_and_permutation_invariant((a, b) in arb_labels(), perm in Just([3u32, 1, 4, 2]).prop_shuffle()) {
        let common = a.iter().zip(&b).filter(|(x, y)| **x != 0 && **y != 0).count();
        prop_assume!(common >= 1);
        let ab = partition_agreement(&map(&a), &map(&b)).unwrap();
        prop_assert_eq!(ab, partition_agreement(&map(&b), &map(&a)).unwrap());
        let relabelled: Vec<u32> = a.iter().map(|l| if *l == 0 { 0 } else { perm[*l as usize - 1] }).collect();
        let ra = partition_agreement(&map(&relabelled), &map(&b)).unwrap();
        prop_assert!((ab - ra).abs() <= 1e-12);
        prop_assert_eq!(partition_agreement(&map(&relabelled), &map(&a)).unwrap(), 1.0);
    }

    #[test]
    fn clustering_labels_exactly_the_mask(vals in prop::collection::vec((-3.0f64..3.0, any::<bool>()), 1..80), seed in any::<u64>()) {
        let grid = ImageGrid::new(vals.len() as u32, 1).unwrap();
        let field = EmbeddingField::from_vec(grid, 1, vals.iter().map(|v| v.0).collect()).unwrap();
        let bits: Vec<bool> = vals.iter().map(|v| v.1).collect();
        let mask = BinaryMask::from_bools(grid, &bits).unwrap();
        let (found, count) = threshold_cluster(&field, &mask, &ClusterConfig::new(0.7).with_seed(seed)).unwrap();
        prop_assert_eq!(found.support(), mask);
        prop_assert!(found.is_contiguous());
        prop_assert_eq!(count, found.instance_count());
    }
}
