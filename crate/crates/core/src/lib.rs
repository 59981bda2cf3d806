//! Lane-instance toolkit.
//!
//! The pieces around a lane-detection network that do not need the network:
//!
//! * [`geometry`]: lane polylines to binary/instance targets, point-map
//!   smoothing, mask IoU.
//! * [`losses`]: discriminative clustering loss with analytic gradients,
//!   weighted binary cross-entropy, L2, and a gradient-descent driver;
//!   [`gradcheck`] verifies the gradients numerically.
//! * [`clustering`]: radius-threshold grouping of lane-pixel embeddings and
//!   the adjusted Rand index.
//! * [`metrics`]: TuSimple accuracy and CULane IoU-based F1.
//! * [`io`]: TuSimple/CULane annotation files, reports, interchange files.
//! * [`synth`]: seeded synthetic scenes for tests and demos.

pub mod clustering;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod grid;
pub mod io;
pub mod losses;
pub mod matching;
pub mod metrics;
pub mod synth;

pub use clustering::{partition_agreement, threshold_cluster, ClusterConfig};
pub use error::{ClusterError, FormatError, GeometryError, GridError, LossError, MetricError, SynthError};
pub use geometry::{mask_iou, rasterize_lane, smooth_point_map, targets_from_lanes, LanePolyline, Point};
pub use grid::{BinaryMask, DrivableMask, HeatMap, ImageGrid, InstanceMap};
pub use losses::{
    cluster_means, clustering_loss, distance_loss, l2_loss, optimize_embeddings, variance_loss, weighted_binary_ce,
    ClusterAssignment, EmbeddingField, LossParams, LossValue,
};
pub use metrics::{
    aggregate_by_category, culane_f1, tusimple_accuracy, Category, CulaneFrame, EvalReport, TuSimpleFrame,
};
