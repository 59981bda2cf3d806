//! Benchmark metrics: TuSimple point accuracy and CULane IoU-based F1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::geometry::{mask_iou, rasterize_lane, LanePolyline};
use crate::grid::ImageGrid;
use crate::matching::best_matching;

/// Lane width for CULane evaluation.
pub const CULANE_LANE_WIDTH: u32 = 30;
/// Lane width for BDD100K evaluation.
pub const BDD100K_LANE_WIDTH: u32 = 8;
/// IoU a prediction must exceed to count as a true positive.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Horizontal tolerance for a TuSimple point to count as correct.
pub const DEFAULT_X_TOLERANCE: f64 = 20.0;
/// Fraction of correct points for a TuSimple lane to count as detected.
pub const DEFAULT_LANE_CORRECT_FRACTION: f64 = 0.85;
/// Sentinel for "no lane at this row" in TuSimple files.
pub const ABSENT: f64 = -2.0;

/// Version of the structured report layout.
pub const REPORT_SCHEMA: u32 = 1;

/// CULane scene categories, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Normal,
    Crowded,
    Night,
    NoLine,
    Shadow,
    Arrow,
    DazzleLight,
    Curve,
    Crossroad,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Normal,
        Category::Crowded,
        Category::Night,
        Category::NoLine,
        Category::Shadow,
        Category::Arrow,
        Category::DazzleLight,
        Category::Curve,
        Category::Crossroad,
    ];

    /// Row label in the table.
    pub fn label(&self) -> &'static str {
        match self {
            Category::Normal => "Normal",
            Category::Crowded => "Crowded",
            Category::Night => "Night",
            Category::NoLine => "No line",
            Category::Shadow => "Shadow",
            Category::Arrow => "Arrow",
            Category::DazzleLight => "Dazzle light",
            Category::Curve => "Curve",
            Category::Crossroad => "Crossroad",
        }
    }

    /// Machine name, as used in sidecar files and JSON.
    pub fn name(&self) -> &'static str {
        match self {
            Category::Normal => "normal",
            Category::Crowded => "crowded",
            Category::Night => "night",
            Category::NoLine => "no_line",
            Category::Shadow => "shadow",
            Category::Arrow => "arrow",
            Category::DazzleLight => "dazzle_light",
            Category::Curve => "curve",
            Category::Crossroad => "crossroad",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;

    /// Accepts machine names, table labels and the CULane split names
    /// (`test0_normal` .. `test8_night`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        let key = key
            .strip_prefix("test")
            .map(|rest| rest.trim_start_matches(|c: char| c.is_ascii_digit()))
            .unwrap_or(&key);
        Ok(match key {
            "normal" => Category::Normal,
            "crowd" | "crowded" => Category::Crowded,
            "night" => Category::Night,
            "noline" => Category::NoLine,
            "shadow" => Category::Shadow,
            "arrow" => Category::Arrow,
            "hlight" | "dazzle" | "dazzlelight" => Category::DazzleLight,
            "curve" => Category::Curve,
            "cross" | "crossroad" => Category::Crossroad,
            _ => return Err(format!("unknown category {s:?}")),
        })
    }
}

/// One TuSimple image: x positions per `h_samples` row, [`ABSENT`] where no lane.
#[derive(Debug, Clone, PartialEq)]
pub struct TuSimpleFrame {
    pub raw_file: String,
    pub h_samples: Vec<f64>,
    pub gt_lanes: Vec<Vec<f64>>,
    pub pred_lanes: Vec<Vec<f64>>,
}

#[inline]
fn present(x: f64) -> bool {
    x >= 0.0
}

impl TuSimpleFrame {
    fn validate(&self) -> Result<(), MetricError> {
        let expected = self.h_samples.len();
        for (which, lanes) in [("gt", &self.gt_lanes), ("pred", &self.pred_lanes)] {
            if let Some((lane, xs)) = lanes.iter().enumerate().find(|(_, xs)| xs.len() != expected) {
                return Err(MetricError::ShapeMismatch {
                    frame: self.raw_file.clone(),
                    which,
                    lane,
                    expected,
                    actual: xs.len(),
                });
            }
        }
        Ok(())
    }
}

/// One CULane image with polylines for ground truth and prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct CulaneFrame {
    pub id: String,
    pub grid: ImageGrid,
    pub category: Category,
    pub gt_lanes: Vec<LanePolyline>,
    pub pred_lanes: Vec<LanePolyline>,
}

impl CulaneFrame {
    pub fn new(
        id: impl Into<String>,
        grid: ImageGrid,
        category: Category,
        gt_lanes: Vec<LanePolyline>,
        pred_lanes: Vec<LanePolyline>,
    ) -> Result<Self, MetricError> {
        let id = id.into();
        if category == Category::Crossroad && !gt_lanes.is_empty() {
            return Err(MetricError::CrossroadWithLanes { frame: id });
        }
        Ok(Self {
            id,
            grid,
            category,
            gt_lanes,
            pred_lanes,
        })
    }
}

/// True positive, false positive and false negative counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.precision(), self.recall())
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, rhs: Counts) -> Counts {
        Counts::new(self.tp + rhs.tp, self.fp + rhs.fp, self.fn_ + rhs.fn_)
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Tusimple,
    Culane,
}

/// Counts and ratios for one category (or the whole run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub frames: u64,
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fn_rate: Option<f64>,
}

impl Summary {
    pub fn from_counts(frames: u64, counts: Counts) -> Self {
        Self {
            frames,
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            accuracy: None,
            fp_rate: None,
            fn_rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: Category,
    #[serde(flatten)]
    pub summary: Summary,
}

/// Parameters and conventions the numbers were produced under.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lane_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lane_correct_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conventions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub metric: MetricKind,
    pub per_category: Vec<CategoryRow>,
    pub totals: Summary,
    pub config: EvalConfig,
}

impl EvalReport {
    pub fn row(&self, category: Category) -> Option<&CategoryRow> {
        self.per_category.iter().find(|r| r.category == category)
    }

    /// Summaries whose F1 must satisfy the harmonic-mean identity.
    pub fn summaries(&self) -> impl Iterator<Item = &Summary> {
        std::iter::once(&self.totals).chain(self.per_category.iter().map(|r| &r.summary))
    }
}

/// Per-lane outcome counts for TuSimple, before turning them into rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TuSimpleCounts {
    pub correct_points: u64,
    pub gt_points: u64,
    pub gt_lanes: u64,
    pub pred_lanes: u64,
    pub counts: Counts,
}

impl std::ops::AddAssign for TuSimpleCounts {
    fn add_assign(&mut self, o: Self) {
        self.correct_points += o.correct_points;
        self.gt_points += o.gt_points;
        self.gt_lanes += o.gt_lanes;
        self.pred_lanes += o.pred_lanes;
        self.counts += o.counts;
    }
}

/// Scores a single TuSimple frame.
///
/// Each ground-truth lane takes the prediction with the most correct points.
/// It is detected when at least `correct_fraction` of its present points are
/// correct; otherwise it is a false negative. A prediction is a false
/// positive unless it is a best match of some detected lane.
pub fn tusimple_frame_counts(
    frame: &TuSimpleFrame,
    x_tolerance: f64,
    correct_fraction: f64,
) -> Result<TuSimpleCounts, MetricError> {
    frame.validate()?;
    let mut out = TuSimpleCounts {
        gt_lanes: frame.gt_lanes.len() as u64,
        pred_lanes: frame.pred_lanes.len() as u64,
        ..Default::default()
    };
    let mut pred_used = vec![false; frame.pred_lanes.len()];
    for gt in &frame.gt_lanes {
        let gt_points = gt.iter().filter(|x| present(**x)).count() as u64;
        out.gt_points += gt_points;
        let correct: Vec<u64> = frame
            .pred_lanes
            .iter()
            .map(|pred| {
                gt.iter()
                    .zip(pred)
                    .filter(|(g, p)| present(**g) && present(**p) && (*p - *g).abs() <= x_tolerance)
                    .count() as u64
            })
            .collect();
        let best = correct.iter().copied().max().unwrap_or(0);
        out.correct_points += best;
        let detected = gt_points > 0 && best as f64 >= correct_fraction * gt_points as f64;
        if detected {
            out.counts.tp += 1;
            for (used, &c) in pred_used.iter_mut().zip(&correct) {
                *used |= c == best;
            }
        } else {
            out.counts.fn_ += 1;
        }
    }
    out.counts.fp = pred_used.iter().filter(|u| !**u).count() as u64;
    Ok(out)
}

/// TuSimple accuracy (correct points over ground-truth points, pooled over
/// frames) with lane-level FP and FN rates.
pub fn tusimple_accuracy(frames: &[TuSimpleFrame], x_tolerance: f64) -> Result<EvalReport, MetricError> {
    tusimple_accuracy_with(frames, x_tolerance, DEFAULT_LANE_CORRECT_FRACTION)
}

pub fn tusimple_accuracy_with(
    frames: &[TuSimpleFrame],
    x_tolerance: f64,
    correct_fraction: f64,
) -> Result<EvalReport, MetricError> {
    if frames.is_empty() {
        return Err(MetricError::NoFrames);
    }
    check_tusimple_params(x_tolerance, correct_fraction)?;
    let mut total = TuSimpleCounts::default();
    for frame in frames {
        total += tusimple_frame_counts(frame, x_tolerance, correct_fraction)?;
    }
    Ok(tusimple_report(
        frames.len() as u64,
        total,
        x_tolerance,
        correct_fraction,
    ))
}

/// Validates TuSimple scoring parameters.
pub fn check_tusimple_params(x_tolerance: f64, correct_fraction: f64) -> Result<(), MetricError> {
    if !(x_tolerance > 0.0 && x_tolerance.is_finite()) {
        return Err(MetricError::InvalidParameter(format!(
            "x tolerance must be positive, got {x_tolerance}"
        )));
    }
    if !(correct_fraction > 0.0 && correct_fraction <= 1.0) {
        return Err(MetricError::InvalidParameter(format!(
            "lane correctness fraction must be in (0, 1], got {correct_fraction}"
        )));
    }
    Ok(())
}

/// Builds the report from pooled counts.
pub fn tusimple_report(frames: u64, total: TuSimpleCounts, x_tolerance: f64, correct_fraction: f64) -> EvalReport {
    let mut totals = Summary::from_counts(frames, total.counts);
    totals.accuracy = Some(ratio(total.correct_points, total.gt_points));
    totals.fp_rate = Some(ratio(total.counts.fp, total.pred_lanes));
    totals.fn_rate = Some(ratio(total.counts.fn_, total.gt_lanes));
    EvalReport {
        schema: REPORT_SCHEMA,
        metric: MetricKind::Tusimple,
        per_category: Vec::new(),
        totals,
        config: EvalConfig {
            x_tolerance: Some(x_tolerance),
            lane_correct_fraction: Some(correct_fraction),
            conventions: vec![
                "point correct when both present and |x_pred - x_gt| <= x_tolerance".into(),
                "gt lane detected when its best prediction has >= lane_correct_fraction correct points".into(),
                "fp_rate over predicted lanes, fn_rate over ground-truth lanes".into(),
            ],
            ..Default::default()
        },
    }
}

/// All-pairs IoU between rasterized ground-truth (rows) and predicted (columns) lanes.
pub fn iou_matrix(
    gt: &[LanePolyline],
    pred: &[LanePolyline],
    lane_width: u32,
    grid: ImageGrid,
) -> Result<Vec<Vec<f64>>, MetricError> {
    let gt_masks = gt
        .iter()
        .map(|l| rasterize_lane(l, lane_width, grid))
        .collect::<Result<Vec<_>, _>>()?;
    let pred_masks = pred
        .iter()
        .map(|l| rasterize_lane(l, lane_width, grid))
        .collect::<Result<Vec<_>, _>>()?;
    gt_masks
        .iter()
        .map(|g| {
            pred_masks
                .iter()
                .map(|p| mask_iou(g, p).map_err(MetricError::from))
                .collect()
        })
        .collect()
}

/// TP/FP/FN of one CULane frame. Crossroad frames only count false positives.
pub fn culane_frame_counts(frame: &CulaneFrame, lane_width: u32, iou_threshold: f64) -> Result<Counts, MetricError> {
    if frame.category == Category::Crossroad {
        if !frame.gt_lanes.is_empty() {
            return Err(MetricError::CrossroadWithLanes {
                frame: frame.id.clone(),
            });
        }
        return Ok(Counts::new(0, frame.pred_lanes.len() as u64, 0));
    }
    if frame.gt_lanes.is_empty() || frame.pred_lanes.is_empty() {
        return Ok(Counts::new(
            0,
            frame.pred_lanes.len() as u64,
            frame.gt_lanes.len() as u64,
        ));
    }
    let iou = iou_matrix(&frame.gt_lanes, &frame.pred_lanes, lane_width, frame.grid)?;
    let tp = best_matching(&iou, iou_threshold).len() as u64;
    Ok(Counts::new(
        tp,
        frame.pred_lanes.len() as u64 - tp,
        frame.gt_lanes.len() as u64 - tp,
    ))
}

/// Validates CULane scoring parameters.
pub fn check_culane_params(lane_width: u32, iou_threshold: f64) -> Result<(), MetricError> {
    if lane_width == 0 {
        return Err(MetricError::InvalidParameter("lane width must be at least 1".into()));
    }
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(MetricError::InvalidParameter(format!(
            "IoU threshold must be in (0, 1], got {iou_threshold}"
        )));
    }
    Ok(())
}

/// CULane F1 over all frames, broken down by category.
pub fn culane_f1(frames: &[CulaneFrame], lane_width: u32, iou_threshold: f64) -> Result<EvalReport, MetricError> {
    check_culane_params(lane_width, iou_threshold)?;
    let per_frame = frames
        .iter()
        .map(|f| Ok((f.category, culane_frame_counts(f, lane_width, iou_threshold)?)))
        .collect::<Result<Vec<_>, MetricError>>()?;
    let mut report = aggregate_by_category(&per_frame);
    report.config = culane_config(lane_width, iou_threshold);
    Ok(report)
}

pub fn culane_config(lane_width: u32, iou_threshold: f64) -> EvalConfig {
    EvalConfig {
        lane_width: Some(lane_width),
        iou_threshold: Some(iou_threshold),
        conventions: vec![
            "true positive requires IoU strictly greater than iou_threshold".into(),
            "maximum-cardinality one-to-one matching, ties broken by total IoU".into(),
            "crossroad frames count false positives only and are excluded from totals".into(),
        ],
        ..Default::default()
    }
}

/// Per-category summaries in table order plus a total over every category
/// except Crossroad. The total is computed from summed counts.
pub fn aggregate_by_category(per_frame: &[(Category, Counts)]) -> EvalReport {
    let mut sums = [Counts::default(); 9];
    let mut frames = [0u64; 9];
    for (category, counts) in per_frame {
        let i = *category as usize;
        sums[i] += *counts;
        frames[i] += 1;
    }
    report_from_sums(&sums, &frames)
}

/// Same as [`aggregate_by_category`] from already-summed counts, indexed by
/// `Category as usize`.
pub fn report_from_sums(sums: &[Counts; 9], frames: &[u64; 9]) -> EvalReport {
    let per_category: Vec<CategoryRow> = Category::ALL
        .iter()
        .map(|&category| CategoryRow {
            category,
            summary: Summary::from_counts(frames[category as usize], sums[category as usize]),
        })
        .collect();
    let total_counts: Counts = Category::ALL
        .iter()
        .filter(|c| **c != Category::Crossroad)
        .map(|c| sums[*c as usize])
        .sum();
    let total_frames = Category::ALL
        .iter()
        .filter(|c| **c != Category::Crossroad)
        .map(|c| frames[*c as usize])
        .sum();
    EvalReport {
        schema: REPORT_SCHEMA,
        metric: MetricKind::Culane,
        per_category,
        totals: Summary::from_counts(total_frames, total_counts),
        config: EvalConfig::default(),
    }
}
