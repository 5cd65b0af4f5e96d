//! Tile placement along a trajectory.

use super::{BevError, Result, TileFrame, DEFAULT_INTENSITY_MAX, DEFAULT_RESOLUTION, DEFAULT_SIZE, DEFAULT_Z_SPAN};
use crate::pointcloud::{Frame, PoseIndex, Trajectory};

/// Parameters for [`plan_tiles`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TilePlan {
    pub resolution: f64,
    pub size: u32,
    /// Fraction of the footprint shared by consecutive tiles, in `[0, 0.9]`.
    pub overlap: f64,
    pub sensor_height: f64,
    pub z_span: f64,
    pub intensity_max: f64,
}

impl Default for TilePlan {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            size: DEFAULT_SIZE,
            overlap: 0.0,
            sensor_height: 2.0,
            z_span: DEFAULT_Z_SPAN,
            intensity_max: DEFAULT_INTENSITY_MAX,
        }
    }
}

impl TilePlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) {
            return Err(BevError::InvalidParams("resolution must be positive".into()));
        }
        if self.size == 0 {
            return Err(BevError::InvalidParams("size must be positive".into()));
        }
        if !(0.0..=0.9).contains(&self.overlap) {
            return Err(BevError::InvalidParams(format!("overlap {} outside [0, 0.9]", self.overlap)));
        }
        if !(self.z_span > 0.0) || !(self.intensity_max > 0.0) {
            return Err(BevError::InvalidParams("z_span and intensity_max must be positive".into()));
        }
        Ok(())
    }

    /// Arc-length distance between consecutive tile centres.
    pub fn spacing(&self) -> f64 {
        self.size as f64 * self.resolution * (1.0 - self.overlap)
    }
}

/// Places tile frames every `size * resolution * (1 - overlap)` metres of arc
/// length, the k-th centred at `(k + 1/2) * spacing` (clamped to the end of
/// the track). Each frame faces the local travel direction; a track with no
/// length yields a single frame using the first pose's heading.
pub fn plan_tiles(traj: &Trajectory, plan: &TilePlan) -> Result<Vec<TileFrame>> {
    plan.validate()?;
    if traj.frame() != Frame::PlanarMeters {
        return Err(BevError::FrameMismatch(traj.frame()));
    }
    let poses = traj.poses();
    let first = poses.first().ok_or(BevError::DegenerateTrajectory)?;

    let mut cumulative = Vec::with_capacity(poses.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in poses.windows(2) {
        total += (w[1].position.x - w[0].position.x).hypot(w[1].position.y - w[0].position.y);
        cumulative.push(total);
    }

    let nearest = PoseIndex::new(poses);
    let make = |x: f64, y: f64, heading: f64| {
        let ground = poses[nearest.nearest(x, y).unwrap()].position.z - plan.sensor_height;
        TileFrame {
            center: [x, y],
            heading: crate::pointcloud::normalize_angle(heading),
            resolution: plan.resolution,
            size: plan.size,
            ground_ref_z: ground,
            z_span: plan.z_span,
            intensity_max: plan.intensity_max,
        }
    };

    if total <= 0.0 {
        return Ok(vec![make(first.position.x, first.position.y, first.heading)]);
    }

    let spacing = plan.spacing();
    let count = ((total / spacing) - 1e-9).ceil().max(1.0) as usize;
    let mut frames = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = ((k as f64 + 0.5) * spacing).min(total);
        while seg + 2 < poses.len() && cumulative[seg + 1] < s {
            seg += 1;
        }
        // skip zero-length segments when picking a direction
        let mut dir_seg = seg;
        while dir_seg + 2 < poses.len() && cumulative[dir_seg + 1] - cumulative[dir_seg] <= 0.0 {
            dir_seg += 1;
        }
        let (a, b) = (&poses[seg].position, &poses[seg + 1].position);
        let len = cumulative[seg + 1] - cumulative[seg];
        let t = if len > 0.0 { ((s - cumulative[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let x = a.x + t * (b.x - a.x);
        let y = a.y + t * (b.y - a.y);
        let (da, db) = (&poses[dir_seg].position, &poses[dir_seg + 1].position);
        let heading = if (db.x - da.x).hypot(db.y - da.y) > 1e-9 {
            (db.y - da.y).atan2(db.x - da.x)
        } else {
            poses[seg].heading
        };
        frames.push(make(x, y, heading));
    }
    Ok(frames)
}
