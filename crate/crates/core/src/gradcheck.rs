//! Central-difference gradient checking and random test instances for it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::LossError;
use crate::grid::{BinaryMask, HeatMap, ImageGrid};
use crate::losses::{
    cluster_means, clustering_loss, l2_loss, weighted_binary_ce, ClusterAssignment, EmbeddingField, LossParams,
    LossValue, DEFAULT_BACKGROUND_WEIGHT,
};

/// Default finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Largest `|analytic − numeric| / max(1, |analytic|)` over all coordinates.
///
/// `loss` maps a flat parameter vector to its value and analytic gradient.
pub fn finite_diff_check<F>(loss: F, point: &[f64], step: f64) -> Result<f64, LossError>
where
    F: Fn(&[f64]) -> Result<LossValue, LossError>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(LossError::InvalidStep(step));
    }
    let at = loss(point)?;
    if !at.value.is_finite() || at.gradient.iter().any(|g| !g.is_finite()) {
        return Err(LossError::NonFinite);
    }
    if at.gradient.len() != point.len() {
        return Err(LossError::LengthMismatch {
            expected: point.len(),
            actual: at.gradient.len(),
        });
    }
    let mut probe = point.to_vec();
    let mut worst = 0.0f64;
    for (k, &analytic) in at.gradient.iter().enumerate() {
        probe[k] = point[k] + step;
        let up = loss(&probe)?.value;
        probe[k] = point[k] - step;
        let down = loss(&probe)?.value;
        probe[k] = point[k];
        if !up.is_finite() || !down.is_finite() {
            return Err(LossError::NonFinite);
        }
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1.0));
    }
    Ok(worst)
}

/// Loss closure over a flat parameter vector.
pub type LossFn = Box<dyn Fn(&[f64]) -> Result<LossValue, LossError> + Send + Sync>;

/// A flat parameter vector plus a closure evaluating a loss at any such vector.
pub struct GradInstance {
    pub name: &'static str,
    pub seed: u64,
    pub point: Vec<f64>,
    pub loss: LossFn,
}

impl GradInstance {
    pub fn check(&self, step: f64) -> Result<f64, LossError> {
        finite_diff_check(&self.loss, &self.point, step)
    }
}

/// Minimum distance every hinge argument keeps from its kink.
fn kink_margin(step: f64) -> f64 {
    (10.0 * step).max(1e-3)
}

/// Random field, assignment and margins with every hinge away from its kink.
pub fn clustering_instance(seed: u64, step: f64) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = kink_margin(step);
    loop {
        let width = rng.random_range(3..=5u32);
        let height = rng.random_range(2..=3u32);
        let grid = ImageGrid::new(width, height).unwrap();
        let dim = rng.random_range(1..=3usize);
        let count = rng.random_range(1..=3u32);
        let delta_v = rng.random_range(0.1..0.8);
        let delta_d = delta_v * rng.random_range(6.2..9.0);
        let params = LossParams::new(delta_v, delta_d).unwrap();

        let mut pixels: Vec<usize> = (0..grid.len()).collect();
        // shuffle, then keep most pixels; some stay background
        for i in (1..pixels.len()).rev() {
            let j = rng.random_range(0..=i);
            pixels.swap(i, j);
        }
        let keep = rng.random_range(count as usize * 2..=pixels.len());
        let entries: Vec<(usize, u32)> = pixels[..keep]
            .iter()
            .enumerate()
            .map(|(k, &p)| (p, (k as u32 % count) + 1))
            .collect();
        let assign = ClusterAssignment::new(entries, count).unwrap();
        let data: Vec<f64> = (0..grid.len() * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let field = EmbeddingField::from_vec(grid, dim, data.clone()).unwrap();

        if !clear_of_kinks(&field, &assign, &params, margin) {
            continue;
        }
        return GradInstance {
            name: "clustering_loss",
            seed,
            point: data,
            loss: Box::new(move |x: &[f64]| {
                let f = EmbeddingField::from_vec(grid, dim, x.to_vec())?;
                clustering_loss(&f, &assign, &params)
            }),
        };
    }
}

fn clear_of_kinks(field: &EmbeddingField, assign: &ClusterAssignment, params: &LossParams, margin: f64) -> bool {
    let means = cluster_means(field, assign).unwrap();
    let sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let pixels_ok = assign
        .iter()
        .all(|(p, c)| (sq(field.vector(p), &means[c as usize - 1]) - params.delta_v()).abs() > margin);
    let means_ok = (0..means.len())
        .all(|a| (a + 1..means.len()).all(|b| (params.delta_d() - sq(&means[a], &means[b])).abs() > margin));
    pixels_ok && means_ok
}

/// Random 4×4 probability map and target for the weighted cross-entropy.
pub fn bce_instance(seed: u64) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = ImageGrid::new(4, 4).unwrap();
    let bits: Vec<bool> = (0..grid.len()).map(|_| rng.random_bool(0.4)).collect();
    let target = BinaryMask::from_bools(grid, &bits).unwrap();
    let point: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.05..0.95)).collect();
    GradInstance {
        name: "weighted_binary_ce",
        seed,
        point,
        loss: Box::new(move |p: &[f64]| weighted_binary_ce(p, &target, DEFAULT_BACKGROUND_WEIGHT)),
    }
}

/// Random prediction/target heat maps for the L2 loss.
pub fn l2_instance(seed: u64) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = ImageGrid::new(rng.random_range(2..=6), rng.random_range(2..=6)).unwrap();
    let target: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.0..2.0)).collect();
    let target = HeatMap::from_values(grid, target).unwrap();
    let point: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.1..2.0)).collect();
    GradInstance {
        name: "l2_loss",
        seed,
        point,
        loss: Box::new(move |p: &[f64]| {
            let pred = HeatMap::from_values(grid, p.to_vec())?;
            l2_loss(&pred, &target)
        }),
    }
}
