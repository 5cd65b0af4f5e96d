//! Trajectory-relative elevation filtering.
//!
//! The ground under a point is estimated as the z of the nearest trajectory
//! pose (in xy) minus the sensor mounting height. A point survives when its z
//! lies in `[ground - band_below, ground + band_above]`.

use super::{Frame, PointCloud, PointCloudError, PoseIndex, Result, Trajectory};
use crate::parallel::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElevationFilter {
    pub band_below: f64,
    pub band_above: f64,
    pub sensor_height: f64,
}

impl Default for ElevationFilter {
    fn default() -> Self {
        Self { band_below: 1.0, band_above: 3.0, sensor_height: 2.0 }
    }
}

impl ElevationFilter {
    /// A filter that keeps every point.
    pub fn disabled() -> Self {
        Self { band_below: f64::INFINITY, band_above: f64::INFINITY, sensor_height: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band_below >= 0.0) || !(self.band_above >= 0.0) {
            return Err(PointCloudError::InvalidBand(format!(
                "bands must be non-negative, got below={} above={}",
                self.band_below, self.band_above
            )));
        }
        if !self.sensor_height.is_finite() {
            return Err(PointCloudError::InvalidBand("sensor height must be finite".into()));
        }
        Ok(())
    }

    pub fn apply(&self, cloud: &PointCloud, traj: &Trajectory, exec: Execution) -> Result<PointCloud> {
        self.validate()?;
        cloud.require_frame(Frame::PlanarMeters)?;
        if traj.frame() != cloud.frame() {
            return Err(PointCloudError::FrameMismatch { expected: cloud.frame(), found: traj.frame() });
        }
        if self.band_below.is_infinite() && self.band_above.is_infinite() {
            return Ok(cloud.clone());
        }
        let poses = traj.poses();
        let index = PoseIndex::new(poses);
        let kept = parallel::filter(cloud.points(), exec, |p| {
            let nearest = index.nearest(p.x, p.y).expect("trajectory is never empty");
            let ground = poses[nearest].position.z - self.sensor_height;
            p.z >= ground - self.band_below && p.z <= ground + self.band_above
        });
        Ok(PointCloud::new(cloud.frame(), kept))
    }
}

/// Convenience wrapper over [`ElevationFilter::apply`].
pub fn elevation_filter(
    cloud: &PointCloud,
    traj: &Trajectory,
    band_below: f64,
    band_above: f64,
    sensor_height: f64,
) -> Result<PointCloud> {
    ElevationFilter { band_below, band_above, sensor_height }.apply(cloud, traj, Execution::default())
}
