//! Point-cloud and trajectory data model shared by every downstream stage.

mod filter;
mod index;
mod io;
mod mercator;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{elevation_filter, ElevationFilter};
pub use index::{GridIndex, PoseIndex};
pub use io::{
    load_point_cloud, load_trajectory, save_point_cloud, save_trajectory, Format, BINARY_MAGIC,
    BINARY_RECORD_LEN, BINARY_VERSION,
};
pub use mercator::{from_mercator, project_cloud, project_trajectory, to_mercator, EARTH_RADIUS, MAX_LATITUDE};

/// Where in an input file a problem was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(u64),
    Offset(u64),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Offset(n) => write!(f, "byte offset {n}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PointCloudError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record at {at}: {reason}")]
    MalformedRecord { at: Location, reason: String },
    #[error("header declares {declared} records but file holds {found}")]
    HeaderMismatch { declared: u64, found: u64 },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point ({lon}, {lat}) lies outside the Web Mercator band")]
    OutOfMercatorBand { lon: f64, lat: f64 },
    #[error("expected {expected:?} frame, got {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("trajectory has no poses")]
    EmptyTrajectory,
    #[error("trajectory time is not strictly increasing at pose {index}")]
    NonMonotoneTime { index: usize },
    #[error("invalid elevation band: {0}")]
    InvalidBand(String),
}

pub type Result<T> = std::result::Result<T, PointCloudError>;

/// Coordinate frame of a cloud or trajectory.
///
/// `Geographic` stores longitude/latitude in degrees in `x`/`y` and ellipsoidal
/// height in `z`. `PlanarMeters` stores projected metres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Geographic,
    PlanarMeters,
}

impl Frame {
    pub(crate) fn flag(self) -> u8 {
        match self {
            Frame::Geographic => 0,
            Frame::PlanarMeters => 1,
        }
    }

    pub(crate) fn from_flag(flag: u8) -> Option<Frame> {
        match flag {
            0 => Some(Frame::Geographic),
            1 => Some(Frame::PlanarMeters),
            _ => None,
        }
    }
}

/// A single LiDAR return.
///
/// Intensity is kept as the scanner's raw 16-bit value; scaling happens at
/// rasterization time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: u16,
    pub time: Option<f64>,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64, intensity: u16) -> Self {
        Self { x, y, z, intensity, time: None }
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = Some(time);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can return exactly 2π for tiny negative inputs
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Vehicle pose. `heading` is counterclockwise from +x (east), in `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Point3,
    pub heading: f64,
    pub time: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, heading: f64, time: f64) -> Self {
        Self {
            position: Point3::new(x, y, z, 0).with_time(time),
            heading: normalize_angle(heading),
            time,
        }
    }
}

/// Time-ordered vehicle track; never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    frame: Frame,
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(frame: Frame, poses: Vec<Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(PointCloudError::EmptyTrajectory);
        }
        for (i, w) in poses.windows(2).enumerate() {
            if !(w[1].time > w[0].time) {
                return Err(PointCloudError::NonMonotoneTime { index: i + 1 });
            }
        }
        Ok(Self { frame, poses })
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Planar arc length of the pose polyline.
    pub fn length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0].position, &w[1].position);
                (b.x - a.x).hypot(b.y - a.y)
            })
            .sum()
    }
}

/// Points sharing a single coordinate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    frame: Frame,
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(frame: Frame, points: Vec<Point3>) -> Self {
        Self { frame, points }
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub(crate) fn require_frame(&self, expected: Frame) -> Result<()> {
        if self.frame != expected {
            return Err(PointCloudError::FrameMismatch { expected, found: self.frame });
        }
        Ok(())
    }
}
