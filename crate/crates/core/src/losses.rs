//! Discriminative clustering loss and the auxiliary branch losses.
//!
//! Every loss returns its value together with the analytic gradient with
//! respect to its differentiable input, laid out like that input.
//!
//! The clustering loss is the sum of a pull term
//!
//! ```text
//! L_var  = 1/L Σ_c 1/N_c Σ_{i∈c} [ ‖μ_c − x_i‖² − δ_v ]₊²
//! ```
//!
//! and a push term
//!
//! ```text
//! L_dist = 1/(L(L−1)) Σ_{a≠b} [ δ_d − ‖μ_a − μ_b‖² ]₊²
//! ```
//!
//! with `[z]₊ = max(0, z)`. [`MarginNorm::Plain`] swaps the squared norms for
//! plain Euclidean ones. Gradients of both terms are propagated through the
//! cluster means.

use crate::error::LossError;
use crate::grid::{BinaryMask, HeatMap, ImageGrid, InstanceMap};

/// Default background weight of the binary segmentation loss.
pub const DEFAULT_BACKGROUND_WEIGHT: f64 = 0.4;

/// Minimum ratio δ_d / δ_v for which radius-2δ_v clustering separates instances.
pub const MARGIN_RATIO: f64 = 6.0;

/// Per-pixel `D`-dimensional embeddings over an image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingField {
    grid: ImageGrid,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingField {
    pub fn zeros(grid: ImageGrid, dim: usize) -> Result<Self, LossError> {
        Self::from_vec(grid, dim, vec![0.0; grid.len() * dim])
    }

    /// Wraps pixel-major data: pixel `p` occupies `data[p*dim..(p+1)*dim]`.
    pub fn from_vec(grid: ImageGrid, dim: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if dim == 0 {
            return Err(LossError::InvalidField("dimension must be at least 1".into()));
        }
        if data.len() != grid.len() * dim {
            return Err(LossError::LengthMismatch {
                expected: grid.len() * dim,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LossError::InvalidField("non-finite entry".into()));
        }
        Ok(Self { grid, dim, data })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn vector(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.dim..(pixel + 1) * self.dim]
    }

    #[inline]
    pub fn vector_mut(&mut self, pixel: usize) -> &mut [f64] {
        &mut self.data[pixel * self.dim..(pixel + 1) * self.dim]
    }
}

/// Which pixels belong to which of the `L` instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pixels: Vec<usize>,
    instances: Vec<u32>,
    count: u32,
    sizes: Vec<usize>,
}

impl ClusterAssignment {
    /// `entries` are `(pixel index, instance id)` with ids in `1..=count`.
    pub fn new(entries: Vec<(usize, u32)>, count: u32) -> Result<Self, LossError> {
        if count == 0 {
            return Err(LossError::NoInstances);
        }
        let mut sizes = vec![0usize; count as usize];
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for &(pixel, instance) in &entries {
            if instance == 0 || instance > count {
                return Err(LossError::AbsentInstance { instance, count });
            }
            if !seen.insert(pixel) {
                return Err(LossError::DuplicatePixel { pixel });
            }
            sizes[instance as usize - 1] += 1;
        }
        if let Some(c) = sizes.iter().position(|n| *n == 0) {
            return Err(LossError::EmptyCluster { instance: c as u32 + 1 });
        }
        let (pixels, instances) = entries.into_iter().unzip();
        Ok(Self {
            pixels,
            instances,
            count,
            sizes,
        })
    }

    /// Every nonzero pixel of the map, labels taken as instance ids.
    pub fn from_instance_map(map: &InstanceMap) -> Result<Self, LossError> {
        let entries = map
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, l)| **l != 0)
            .map(|(i, l)| (i, *l))
            .collect();
        Self::new(entries, map.instance_count())
    }

    /// Number of instances L.
    pub fn instance_count(&self) -> u32 {
        self.count
    }

    /// N_c for `c` in `1..=L`, stored at index `c - 1`.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `(pixel, instance)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.pixels.iter().copied().zip(self.instances.iter().copied())
    }

    fn check_field(&self, field: &EmbeddingField) -> Result<(), LossError> {
        let len = field.grid().len();
        match self.pixels.iter().find(|p| **p >= len) {
            Some(&pixel) => Err(LossError::PixelOutOfRange { pixel, len }),
            None => Ok(()),
        }
    }
}

/// Norm used inside the hinges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginNorm {
    /// `‖·‖²` inside both hinges.
    #[default]
    Squared,
    /// `‖·‖` inside both hinges.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    delta_v: f64,
    delta_d: f64,
    norm: MarginNorm,
    var_weight: f64,
    dist_weight: f64,
}

impl LossParams {
    /// Margins with `delta_d > 6 * delta_v` enforced.
    pub fn new(delta_v: f64, delta_d: f64) -> Result<Self, LossError> {
        let params = Self::with_any_ratio(delta_v, delta_d)?;
        if delta_d <= MARGIN_RATIO * delta_v {
            return Err(LossError::InvalidParams(format!(
                "delta_d ({delta_d}) must exceed {MARGIN_RATIO} * delta_v ({delta_v})"
            )));
        }
        Ok(params)
    }

    /// Margins without the ratio rule, for experiments.
    pub fn with_any_ratio(delta_v: f64, delta_d: f64) -> Result<Self, LossError> {
        for (name, v) in [("delta_v", delta_v), ("delta_d", delta_d)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LossError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            delta_v,
            delta_d,
            norm: MarginNorm::Squared,
            var_weight: 1.0,
            dist_weight: 1.0,
        })
    }

    pub fn with_norm(mut self, norm: MarginNorm) -> Self {
        self.norm = norm;
        self
    }

    /// Weights of the pull and push terms in [`clustering_loss`]; both default to 1.
    pub fn with_weights(mut self, var_weight: f64, dist_weight: f64) -> Self {
        self.var_weight = var_weight;
        self.dist_weight = dist_weight;
        self
    }

    pub fn delta_v(&self) -> f64 {
        self.delta_v
    }

    pub fn delta_d(&self) -> f64 {
        self.delta_d
    }

    pub fn norm(&self) -> MarginNorm {
        self.norm
    }
}

/// A scalar loss and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl LossValue {
    fn checked(self) -> Result<Self, LossError> {
        if !self.value.is_finite() || self.gradient.iter().any(|g| !g.is_finite()) {
            return Err(LossError::NonFinite);
        }
        Ok(self)
    }
}

#[inline]
fn hinge(z: f64) -> f64 {
    z.max(0.0)
}

/// Mean embedding of each instance, `μ_1..μ_L`.
pub fn cluster_means(field: &EmbeddingField, assign: &ClusterAssignment) -> Result<Vec<Vec<f64>>, LossError> {
    assign.check_field(field)?;
    let dim = field.dim();
    let mut means = vec![vec![0.0; dim]; assign.count as usize];
    for (pixel, c) in assign.iter() {
        for (m, x) in means[c as usize - 1].iter_mut().zip(field.vector(pixel)) {
            *m += x;
        }
    }
    for (mean, &n) in means.iter_mut().zip(&assign.sizes) {
        if n == 0 {
            return Err(LossError::EmptyCluster { instance: 0 });
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
    }
    Ok(means)
}

/// Measure inside the hinge and its derivative with respect to the difference vector.
///
/// Returns `(s, ds/dd)` where `d` is the difference vector, scaled so that
/// `ds/dd = factor * d`.
#[inline]
fn margin_measure(norm: MarginNorm, diff: &[f64]) -> (f64, f64) {
    let sq: f64 = diff.iter().map(|v| v * v).sum();
    match norm {
        MarginNorm::Squared => (sq, 2.0),
        MarginNorm::Plain => {
            let n = sq.sqrt();
            // the zero vector is a kink; take the zero subgradient there
            (n, if n > 0.0 { 1.0 / n } else { 0.0 })
        }
    }
}

/// Pull term with gradient w.r.t. every field entry (zeros off-cluster).
pub fn variance_loss(
    field: &EmbeddingField,
    assign: &ClusterAssignment,
    params: &LossParams,
) -> Result<LossValue, LossError> {
    let means = cluster_means(field, assign)?;
    variance_with_means(field, assign, params, &means)
}

fn variance_with_means(
    field: &EmbeddingField,
    assign: &ClusterAssignment,
    params: &LossParams,
    means: &[Vec<f64>],
) -> Result<LossValue, LossError> {
    let dim = field.dim();
    let l = assign.count as f64;
    let mut value = 0.0;
    let mut gradient = vec![0.0; field.as_slice().len()];
    // Σ_i g_i per cluster, needed for the path through μ_c.
    let mut pulled = vec![vec![0.0; dim]; means.len()];
    let mut diff = vec![0.0; dim];
    for (pixel, c) in assign.iter() {
        let ci = c as usize - 1;
        let scale = 1.0 / (l * assign.sizes[ci] as f64);
        let x = field.vector(pixel);
        for ((d, xv), mv) in diff.iter_mut().zip(x).zip(&means[ci]) {
            *d = xv - mv;
        }
        let (s, factor) = margin_measure(params.norm, &diff);
        let h = hinge(s - params.delta_v);
        if h == 0.0 {
            continue;
        }
        value += scale * h * h;
        let coeff = scale * 2.0 * h * factor;
        let g = &mut gradient[pixel * dim..(pixel + 1) * dim];
        for ((gv, d), p) in g.iter_mut().zip(&diff).zip(pulled[ci].iter_mut()) {
            *gv += coeff * d;
            *p += coeff * d;
        }
    }
    for (pixel, c) in assign.iter() {
        let ci = c as usize - 1;
        let n = assign.sizes[ci] as f64;
        let g = &mut gradient[pixel * dim..(pixel + 1) * dim];
        for (gv, p) in g.iter_mut().zip(&pulled[ci]) {
            *gv -= p / n;
        }
    }
    LossValue { value, gradient }.checked()
}

/// Push term over cluster means; gradient has one `D`-block per mean.
///
/// Zero for a single instance.
pub fn distance_loss(means: &[Vec<f64>], params: &LossParams) -> Result<LossValue, LossError> {
    let l = means.len();
    if l == 0 {
        return Err(LossError::NoInstances);
    }
    let dim = means[0].len();
    if let Some(bad) = means.iter().find(|m| m.len() != dim) {
        return Err(LossError::LengthMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    let mut gradient = vec![0.0; l * dim];
    if l == 1 {
        return Ok(LossValue { value: 0.0, gradient });
    }
    let scale = 1.0 / (l * (l - 1)) as f64;
    let mut value = 0.0;
    let mut diff = vec![0.0; dim];
    // Each unordered pair appears twice in the ordered double sum.
    for a in 0..l {
        for b in a + 1..l {
            for ((d, ma), mb) in diff.iter_mut().zip(&means[a]).zip(&means[b]) {
                *d = ma - mb;
            }
            let (s, factor) = margin_measure(params.norm, &diff);
            let h = hinge(params.delta_d - s);
            if h == 0.0 {
                continue;
            }
            value += 2.0 * scale * h * h;
            let coeff = 2.0 * scale * 2.0 * h * factor;
            for (k, d) in diff.iter().enumerate() {
                gradient[a * dim + k] -= coeff * d;
                gradient[b * dim + k] += coeff * d;
            }
        }
    }
    LossValue { value, gradient }.checked()
}

/// Weighted sum of the pull and push terms, gradient w.r.t. the whole field.
pub fn clustering_loss(
    field: &EmbeddingField,
    assign: &ClusterAssignment,
    params: &LossParams,
) -> Result<LossValue, LossError> {
    let means = cluster_means(field, assign)?;
    let var = variance_with_means(field, assign, params, &means)?;
    let dist = distance_loss(&means, params)?;
    let dim = field.dim();
    let mut gradient = var.gradient;
    gradient.iter_mut().for_each(|g| *g *= params.var_weight);
    for (pixel, c) in assign.iter() {
        let ci = c as usize - 1;
        let n = assign.sizes[ci] as f64;
        let gm = &dist.gradient[ci * dim..(ci + 1) * dim];
        let g = &mut gradient[pixel * dim..(pixel + 1) * dim];
        for (gv, d) in g.iter_mut().zip(gm) {
            *gv += params.dist_weight * d / n;
        }
    }
    LossValue {
        value: params.var_weight * var.value + params.dist_weight * dist.value,
        gradient,
    }
    .checked()
}

/// Pixel-mean binary cross-entropy with background pixels down-weighted.
///
/// `probabilities` are row-major over the target's grid and must lie strictly
/// inside (0, 1); the gradient is w.r.t. the probabilities.
pub fn weighted_binary_ce(
    probabilities: &[f64],
    target: &BinaryMask,
    background_weight: f64,
) -> Result<LossValue, LossError> {
    let n = target.grid().len();
    if probabilities.len() != n {
        return Err(LossError::LengthMismatch {
            expected: n,
            actual: probabilities.len(),
        });
    }
    if !(background_weight >= 0.0 && background_weight.is_finite()) {
        return Err(LossError::InvalidParams(format!(
            "background weight must be non-negative, got {background_weight}"
        )));
    }
    let mut value = 0.0;
    let mut gradient = vec![0.0; n];
    let inv_n = 1.0 / n as f64;
    for (i, (&p, g)) in probabilities.iter().zip(gradient.iter_mut()).enumerate() {
        if !(p > 0.0 && p < 1.0) {
            return Err(LossError::SaturatedProbability { index: i, value: p });
        }
        if target.get_index(i) {
            value -= p.ln();
            *g = -inv_n / p;
        } else {
            value -= background_weight * (1.0 - p).ln();
            *g = inv_n * background_weight / (1.0 - p);
        }
    }
    LossValue {
        value: value * inv_n,
        gradient,
    }
    .checked()
}

/// Mean squared error, gradient w.r.t. the prediction.
pub fn l2_loss(prediction: &HeatMap, target: &HeatMap) -> Result<LossValue, LossError> {
    prediction.grid().ensure_same(&target.grid())?;
    let inv_n = 1.0 / prediction.grid().len() as f64;
    let mut value = 0.0;
    let gradient = prediction
        .values()
        .iter()
        .zip(target.values())
        .map(|(p, t)| {
            let d = p - t;
            value += d * d;
            2.0 * d * inv_n
        })
        .collect();
    LossValue {
        value: value * inv_n,
        gradient,
    }
    .checked()
}

/// Result of [`optimize_embeddings`].
#[derive(Debug, Clone)]
pub struct Optimized {
    pub field: EmbeddingField,
    /// Loss before each update followed by the loss of the returned field.
    pub losses: Vec<f64>,
}

impl Optimized {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least one loss value")
    }
}

/// Plain full-gradient descent on [`clustering_loss`].
///
/// Stops early once the loss is exactly zero, since the gradient is then zero too.
pub fn optimize_embeddings(
    field: &EmbeddingField,
    assign: &ClusterAssignment,
    params: &LossParams,
    steps: usize,
    learning_rate: f64,
) -> Result<Optimized, LossError> {
    if steps == 0 {
        return Err(LossError::InvalidOptimizer("steps must be at least 1".into()));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(LossError::InvalidOptimizer(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    let mut current = field.clone();
    let mut losses = Vec::with_capacity(steps + 1);
    let eval = |f: &EmbeddingField, step: usize| match clustering_loss(f, assign, params) {
        Ok(v) => Ok(v),
        Err(LossError::NonFinite) => Err(LossError::Diverged { step }),
        Err(e) => Err(e),
    };
    for step in 0..steps {
        let loss = eval(&current, step)?;
        losses.push(loss.value);
        if loss.value == 0.0 {
            return Ok(Optimized { field: current, losses });
        }
        for (x, g) in current.data.iter_mut().zip(&loss.gradient) {
            *x -= learning_rate * g;
        }
        if current.data.iter().any(|x| !x.is_finite()) {
            return Err(LossError::Diverged { step: step + 1 });
        }
    }
    losses.push(eval(&current, steps)?.value);
    Ok(Optimized { field: current, losses })
}
