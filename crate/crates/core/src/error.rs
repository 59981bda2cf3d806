use std::path::PathBuf;

use thiserror::Error;

use crate::grid::ImageGrid;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("image grid must be at least 1x1, got {width}x{height}")]
    EmptyGrid { width: u32, height: u32 },
    #[error("grid mismatch: {left} vs {right}")]
    Mismatch { left: ImageGrid, right: ImageGrid },
    #[error("buffer of length {len} does not fit grid {grid}")]
    Shape { grid: ImageGrid, len: usize },
    #[error("invalid value {value} at pixel {index}")]
    InvalidValue { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate polyline: {points} point(s), need at least 2")]
    DegeneratePolyline { points: usize },
    #[error("stroke width must be at least 1 pixel")]
    ZeroWidth,
    #[error("non-finite coordinate in polyline")]
    NonFinite,
    #[error("point out of bounds: ({x}, {y}) outside {grid}")]
    PointOutOfBounds { x: i64, y: i64, grid: ImageGrid },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("empty cluster: instance {instance} has no pixels")]
    EmptyCluster { instance: u32 },
    #[error("instance id {instance} outside 1..={count}")]
    AbsentInstance { instance: u32, count: u32 },
    #[error("assignment needs at least one instance")]
    NoInstances,
    #[error("pixel {pixel} assigned twice")]
    DuplicatePixel { pixel: usize },
    #[error("pixel {pixel} outside field of {len} pixels")]
    PixelOutOfRange { pixel: usize, len: usize },
    #[error("invalid margins: {0}")]
    InvalidParams(String),
    #[error("embedding field: {0}")]
    InvalidField(String),
    #[error("saturated probability {value} at pixel {index}")]
    SaturatedProbability { index: usize, value: f64 },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite loss or gradient")]
    NonFinite,
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("diverged at step {step}")]
    Diverged { step: usize },
    #[error("invalid optimizer setting: {0}")]
    InvalidOptimizer(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("clustering radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("empty overlap: the two maps share no labelled pixel")]
    EmptyOverlap,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("no frames to evaluate")]
    NoFrames,
    #[error("invalid metric parameter: {0}")]
    InvalidParameter(String),
    #[error("frame {frame}: {which} lane {lane} has {actual} points, h_samples has {expected}")]
    ShapeMismatch {
        frame: String,
        which: &'static str,
        lane: usize,
        expected: usize,
        actual: usize,
    },
    #[error("frame {frame}: crossroad frames must not carry ground-truth lanes")]
    CrossroadWithLanes { frame: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Parse and I/O failures. Parse errors always carry file and line.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl FormatError {
    pub(crate) fn parse(path: &str, line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("infeasible scene: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
