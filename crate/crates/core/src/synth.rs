//! Seeded synthetic scenes: ground-truth lanes, perturbed predictions and a
//! clusterable embedding field.
//!
//! Lanes are quadratic curves `x(t) = base + slope·t + curvature·W·t²` with
//! `t = y / (H − 1)`. All lanes share the quadratic term, so the gap between
//! neighbours is linear in `t` and checking it at every sample row is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::SynthError;
use crate::geometry::{targets_from_lanes, LanePolyline, Point};
use crate::grid::{BinaryMask, ImageGrid, InstanceMap};
use crate::io::TuSimpleRecord;
use crate::losses::{EmbeddingField, MARGIN_RATIO};
use crate::metrics::{Category, CulaneFrame, ABSENT};

/// Upper bound on lanes per scene.
pub const MAX_LANES: usize = 8;
const MAX_ATTEMPTS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub grid: ImageGrid,
    pub lane_count: usize,
    /// Quadratic coefficient as a fraction of the image width.
    pub curvature: f64,
    /// Standard deviation of the per-point x noise on predictions, pixels.
    pub jitter: f64,
    pub seed: u64,
    pub embedding_dim: usize,
    pub delta_v: f64,
    pub delta_d: f64,
    /// Width used to rasterize the instance map.
    pub lane_width: u32,
    /// Number of annotated rows (at most the image height).
    pub samples: usize,
    pub drop_prob: f64,
    pub add_prob: f64,
    /// Extra lower bound on the distance between neighbouring lanes, pixels.
    pub min_gap: f64,
}

impl SceneSpec {
    pub fn new(grid: ImageGrid, lane_count: usize, seed: u64) -> Self {
        Self {
            grid,
            lane_count,
            curvature: 0.1,
            jitter: 0.0,
            seed,
            embedding_dim: 2,
            delta_v: 0.5,
            delta_d: 3.1,
            lane_width: 1,
            samples: 48,
            drop_prob: 0.1,
            add_prob: 0.1,
            min_gap: 0.0,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Infeasible(m));
        if !(1..=MAX_LANES).contains(&self.lane_count) {
            return fail(format!("lane count {} outside 1..={MAX_LANES}", self.lane_count));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return fail(format!("jitter must be non-negative, got {}", self.jitter));
        }
        if !self.curvature.is_finite() || !self.min_gap.is_finite() {
            return fail("curvature must be finite".into());
        }
        if !(self.delta_v > 0.0 && self.delta_d > MARGIN_RATIO * self.delta_v && self.delta_d.is_finite()) {
            return fail(format!(
                "need 0 < delta_v and delta_d > {MARGIN_RATIO}·delta_v, got {} / {}",
                self.delta_v, self.delta_d
            ));
        }
        if self.embedding_dim == 0 {
            return fail("embedding dimension must be at least 1".into());
        }
        if self.lane_width == 0 {
            return fail("lane width must be at least 1".into());
        }
        if self.grid.height() < 2 || self.samples < 2 {
            return fail("need at least two annotated rows".into());
        }
        for p in [self.drop_prob, self.add_prob] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("probability {p} outside [0, 1]"));
            }
        }
        if (self.grid.width() as f64) / (self.lane_count as f64 + 1.0) < self.required_gap() {
            return fail(format!(
                "{} lanes at least {} px apart do not fit in width {}",
                self.lane_count,
                self.required_gap(),
                self.grid.width()
            ));
        }
        Ok(())
    }

    /// Minimum horizontal distance between neighbouring ground-truth lanes:
    /// `min_gap`, but never less than three lane widths plus two pixels.
    pub fn required_gap(&self) -> f64 {
        self.min_gap.max(3.0 * self.lane_width as f64 + 2.0)
    }

    /// Annotated rows, evenly spaced from top to bottom.
    pub fn h_samples(&self) -> Vec<f64> {
        let h = self.grid.height() as usize;
        let n = self.samples.min(h);
        (0..n)
            .map(|j| ((j * (h - 1)) as f64 / (n - 1) as f64).round())
            .collect()
    }
}

/// Lanes of a scene, without embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneScene {
    pub h_samples: Vec<f64>,
    pub gt: Vec<LanePolyline>,
    pub pred: Vec<LanePolyline>,
    /// Index of the ground-truth lane left out of the predictions.
    pub dropped: Option<usize>,
    /// Whether a lane with no ground-truth counterpart was appended to the predictions.
    pub spurious: bool,
}

/// A full scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub lanes: LaneScene,
    pub field: EmbeddingField,
    pub mask: BinaryMask,
    pub instances: InstanceMap,
}

fn curve_points(xs: &[f64], ys: &[f64]) -> LanePolyline {
    LanePolyline::new(xs.iter().zip(ys).map(|(x, y)| Point::new(*x, *y)).collect())
}

fn draw_curves(spec: &SceneSpec, rng: &mut ChaCha8Rng, ys: &[f64]) -> Option<Vec<Vec<f64>>> {
    let w = spec.grid.width() as f64;
    let h = spec.grid.height() as f64;
    let l = spec.lane_count;
    let spacing = w / (l as f64 + 1.0);
    let mut curves = Vec::with_capacity(l);
    for k in 0..l {
        let base = spacing * (k as f64 + 1.0) + rng.random_range(-0.25..0.25) * spacing;
        let slope = rng.random_range(-0.15..0.15) * w;
        let xs: Vec<f64> = ys
            .iter()
            .map(|y| {
                let t = y / (h - 1.0);
                base + slope * t + spec.curvature * w * t * t
            })
            .collect();
        if xs.iter().any(|x| *x < 0.0 || *x > w - 1.0) {
            return None;
        }
        curves.push(xs);
    }
    let gap_ok = curves
        .windows(2)
        .all(|pair| pair[0].iter().zip(&pair[1]).all(|(a, b)| b - a >= spec.required_gap()));
    gap_ok.then_some(curves)
}

/// Curve halfway across the widest gap between neighbouring lanes or the image edges.
fn spurious_curve(curves: &[Vec<f64>], width: f64) -> Vec<f64> {
    let n = curves[0].len();
    let left = vec![0.0; n];
    let right = vec![width - 1.0; n];
    let mut bounds: Vec<&Vec<f64>> = vec![&left];
    bounds.extend(curves.iter());
    bounds.push(&right);
    let widest = bounds
        .windows(2)
        .max_by(|a, b| {
            let ga = a[1].iter().zip(a[0]).map(|(x, y)| x - y).fold(f64::INFINITY, f64::min);
            let gb = b[1].iter().zip(b[0]).map(|(x, y)| x - y).fold(f64::INFINITY, f64::min);
            ga.total_cmp(&gb)
        })
        .expect("at least two bounds");
    widest[0].iter().zip(widest[1]).map(|(a, b)| (a + b) / 2.0).collect()
}

/// Ground-truth and predicted lanes for `spec`.
pub fn generate_lanes(spec: &SceneSpec) -> Result<LaneScene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    lanes_with_rng(spec, &mut rng)
}

fn lanes_with_rng(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<LaneScene, SynthError> {
    let ys = spec.h_samples();
    let curves = (0..MAX_ATTEMPTS)
        .find_map(|_| draw_curves(spec, rng, &ys))
        .ok_or_else(|| {
            SynthError::Infeasible(format!(
                "could not place {} non-crossing lanes inside {} (curvature {})",
                spec.lane_count, spec.grid, spec.curvature
            ))
        })?;
    let gt: Vec<LanePolyline> = curves.iter().map(|xs| curve_points(xs, &ys)).collect();

    let noise = Normal::new(0.0, spec.jitter).expect("jitter validated");
    let mut pred: Vec<LanePolyline> = curves
        .iter()
        .map(|xs| {
            let jittered: Vec<f64> = xs.iter().map(|x| x + noise.sample(rng)).collect();
            curve_points(&jittered, &ys)
        })
        .collect();
    let dropped = if rng.random_bool(spec.drop_prob) {
        let k = rng.random_range(0..pred.len());
        pred.remove(k);
        Some(k)
    } else {
        None
    };
    let spurious = rng.random_bool(spec.add_prob);
    if spurious {
        pred.push(curve_points(&spurious_curve(&curves, spec.grid.width() as f64), &ys));
    }
    Ok(LaneScene {
        h_samples: ys,
        gt,
        pred,
        dropped,
        spurious,
    })
}

/// Full scene: lanes, rasterized instances and an embedding field in which
/// every lane pixel lies within `delta_v / 2` of its lane's center and the
/// centers are at least `delta_d + 1` apart.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lanes = lanes_with_rng(spec, &mut rng)?;
    let (mask, instances) = targets_from_lanes(&lanes.gt, spec.lane_width, spec.grid)?;
    if !instances.is_contiguous() || instances.instance_count() as usize != spec.lane_count {
        return Err(SynthError::Infeasible("a lane has no visible pixel".into()));
    }
    let centers = lane_centers(spec, &mut rng);
    let field = field_around(&instances, &centers, 0.5 * spec.delta_v, &mut rng);
    if !separation_holds(&field, &instances, spec.delta_v) {
        return Err(SynthError::Infeasible(
            "generated field violates the separation condition".into(),
        ));
    }
    Ok(Scene {
        lanes,
        field,
        mask,
        instances,
    })
}

fn lane_centers(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = spec.embedding_dim;
    let step = spec.delta_d + 1.0;
    let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    (0..spec.lane_count)
        .map(|k| {
            (0..d)
                .map(|j| {
                    // spacing along the first axis; the other axes only add distance
                    let along = if j == 0 {
                        k as f64 * step
                    } else {
                        rng.random_range(-1.0..1.0) * step
                    };
                    along + offset[j]
                })
                .collect()
        })
        .collect()
}

fn random_in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir.into_iter().map(|v| v / norm * r).collect()
}

/// Field with each labelled pixel drawn from a ball of `radius` around its
/// instance's center; background pixels are zero.
pub fn field_around(
    instances: &InstanceMap,
    centers: &[Vec<f64>],
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> EmbeddingField {
    let dim = centers[0].len();
    let mut field = EmbeddingField::zeros(instances.grid(), dim).expect("dim >= 1");
    for (pixel, &label) in instances.labels().iter().enumerate() {
        if label == 0 {
            continue;
        }
        let center = &centers[label as usize - 1];
        let offset = random_in_ball(rng, dim, radius);
        for ((v, c), o) in field.vector_mut(pixel).iter_mut().zip(center).zip(&offset) {
            *v = c + o;
        }
    }
    field
}

/// Embeddings that start out entangled: compact per lane, but with lane
/// centers drawn from a ball of radius `center_spread`, so clusters overlap
/// until the push term separates them. Pixels stay within `pixel_radius` of
/// their center.
pub fn entangled_field(
    instances: &InstanceMap,
    dim: usize,
    center_spread: f64,
    pixel_radius: f64,
    seed: u64,
) -> EmbeddingField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = instances.instance_count() as usize;
    let centers: Vec<Vec<f64>> = (0..count.max(1))
        .map(|_| random_in_ball(&mut rng, dim, center_spread))
        .collect();
    field_around(instances, &centers, pixel_radius, &mut rng)
}

/// Scene used to exercise optimize-then-cluster: four width-1 lanes on a
/// 48×24 grid annotated on every row, `delta_v` 0.5, `delta_d` 3.1.
pub fn recovery_spec(seed: u64) -> SceneSpec {
    let grid = ImageGrid::new(48, 24).expect("non-empty grid");
    SceneSpec {
        samples: 24,
        ..SceneSpec::new(grid, 4, seed)
    }
}

/// Outcome of one optimize-then-cluster run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryTrial {
    /// Agreement of the clustering of the starting field with the ground truth.
    pub ari_before: f64,
    pub ari_after: f64,
    pub final_loss: f64,
    pub steps: usize,
}

/// Builds [`recovery_spec`], starts from an [`entangled_field`] (pixels within
/// 0.3 of centers spread over a unit ball), runs gradient descent and clusters
/// with radius `2 * delta_v`.
pub fn recovery_trial(seed: u64, steps: usize, learning_rate: f64) -> Result<RecoveryTrial, SynthError> {
    use crate::clustering::{partition_agreement, threshold_cluster, ClusterConfig};
    use crate::losses::{optimize_embeddings, ClusterAssignment, LossParams};

    let spec = recovery_spec(seed);
    let scene = generate_scene(&spec)?;
    let start = entangled_field(&scene.instances, spec.embedding_dim, 1.0, 0.3, seed);
    let assign = ClusterAssignment::from_instance_map(&scene.instances).map_err(infeasible)?;
    let params = LossParams::new(spec.delta_v, spec.delta_d).map_err(infeasible)?;
    let opt = optimize_embeddings(&start, &assign, &params, steps, learning_rate).map_err(infeasible)?;
    let config = ClusterConfig::new(2.0 * spec.delta_v).with_seed(seed);
    let ari = |field: &EmbeddingField| -> Result<f64, SynthError> {
        let (found, _) = threshold_cluster(field, &scene.mask, &config).map_err(infeasible)?;
        partition_agreement(&found, &scene.instances).map_err(infeasible)
    };
    Ok(RecoveryTrial {
        ari_before: ari(&start)?,
        ari_after: ari(&opt.field)?,
        final_loss: opt.final_loss(),
        steps: opt.losses.len() - 1,
    })
}

fn infeasible(e: impl std::fmt::Display) -> SynthError {
    SynthError::Infeasible(e.to_string())
}

/// Whether every labelled pixel is strictly within `delta_v` of its
/// instance mean and all means are more than `6 * delta_v` apart.
pub fn separation_holds(field: &EmbeddingField, instances: &InstanceMap, delta_v: f64) -> bool {
    let dim = field.dim();
    let count = instances.instance_count() as usize;
    let mut sums = vec![vec![0.0; dim]; count];
    let mut sizes = vec![0usize; count];
    for (pixel, &label) in instances.labels().iter().enumerate() {
        if label == 0 {
            continue;
        }
        let c = label as usize - 1;
        sizes[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(field.vector(pixel)) {
            *s += v;
        }
    }
    if sizes.contains(&0) {
        return false;
    }
    let means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&sizes)
        .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let pixels_ok = instances
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| **l != 0)
        .all(|(p, &l)| dist(field.vector(p), &means[l as usize - 1]) < delta_v);
    let means_ok = (0..count).all(|a| (a + 1..count).all(|b| dist(&means[a], &means[b]) > MARGIN_RATIO * delta_v));
    pixels_ok && means_ok
}

/// Seed of frame `index` in a corpus generated from `seed`.
pub fn frame_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Category of frame `index` in a synthetic CULane corpus: cycles through all nine.
pub fn frame_category(index: u64) -> Category {
    Category::ALL[(index % Category::ALL.len() as u64) as usize]
}

impl LaneScene {
    fn records(&self, lanes: &[LanePolyline], width: u32, raw_file: &str) -> TuSimpleRecord {
        let w = width as f64;
        TuSimpleRecord {
            lanes: lanes
                .iter()
                .map(|l| {
                    l.points()
                        .iter()
                        .map(|p| if p.x >= 0.0 && p.x <= w - 1.0 { p.x } else { ABSENT })
                        .collect()
                })
                .collect(),
            h_samples: self.h_samples.clone(),
            raw_file: raw_file.to_string(),
        }
    }

    /// Ground-truth and prediction records; points outside the image become absent.
    pub fn tusimple_records(&self, grid: ImageGrid, raw_file: &str) -> (TuSimpleRecord, TuSimpleRecord) {
        (
            self.records(&self.gt, grid.width(), raw_file),
            self.records(&self.pred, grid.width(), raw_file),
        )
    }

    pub fn culane_frame(&self, id: &str, grid: ImageGrid, category: Category) -> CulaneFrame {
        let (gt, pred) = if category == Category::Crossroad {
            // no markings; any predicted lane is a false positive
            let pred = if self.spurious {
                vec![self.gt[0].clone()]
            } else {
                Vec::new()
            };
            (Vec::new(), pred)
        } else {
            (self.gt.clone(), self.pred.clone())
        };
        CulaneFrame::new(id, grid, category, gt, pred).expect("crossroad frames carry no ground truth")
    }
}
