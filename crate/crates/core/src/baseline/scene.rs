//! Straight-road scene generator with painted lane lines and pole columns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BaselineError, Result};
use crate::descriptor::{DescriptorVector, Detection, ObjectClass, Source, DEFAULT_POLYLINE_VERTICES};
use crate::distill::LabelSet;
use crate::pointcloud::{Frame, Point3, PointCloud, Pose, Trajectory};

/// Scene parameters. Lengths in metres, intensities in raw sensor units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub road_length: f64,
    pub lane_count: u32,
    pub lane_width: f64,
    /// Poles stand at every multiple of this arc length, both ends included.
    pub pole_spacing: f64,
    /// Heights assigned to poles in turn.
    pub pole_heights: Vec<f64>,
    pub pole_radius: f64,
    /// Lateral gap between the outermost lane line and the poles.
    pub pole_offset: f64,
    /// Standard deviation of the xyz noise added to every point.
    pub noise_sigma: f64,
    /// Probability of dropping each point.
    pub dropout: f64,
    pub seed: u64,
    /// Planar position of the road start.
    pub origin: [f64; 2],
    pub heading: f64,
    pub ground_z: f64,
    pub sensor_height: f64,
    /// Ground-truth lane lines are cut into pieces of this length.
    pub lane_segment_length: f64,
    pub marking_width: f64,
    pub paint_spacing: f64,
    pub ground_spacing: f64,
    /// Ground extends this far beyond the poles on both sides.
    pub ground_margin: f64,
    /// Per-line paint brightness is drawn from this range.
    pub paint_intensity: [u16; 2],
    pub ground_intensity: [u16; 2],
    pub pole_intensity: u16,
    pub pose_spacing: f64,
    /// Vehicle speed in m/s, used for timestamps.
    pub speed: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            road_length: 100.0,
            lane_count: 2,
            lane_width: 3.5,
            pole_spacing: 25.0,
            pole_heights: vec![6.0, 4.5],
            pole_radius: 0.1,
            pole_offset: 1.0,
            noise_sigma: 0.0,
            dropout: 0.0,
            seed: 7,
            origin: [1000.0, 2000.0],
            heading: 0.0,
            ground_z: 45.0,
            sensor_height: 2.0,
            lane_segment_length: 51.2,
            marking_width: 0.15,
            paint_spacing: 0.025,
            ground_spacing: 0.1,
            ground_margin: 3.0,
            paint_intensity: [30_000, 60_000],
            ground_intensity: [1_000, 12_000],
            pole_intensity: 9_000,
            pose_spacing: 1.0,
            speed: 10.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BaselineError::InvalidConfig(m));
        let positive = [
            ("road_length", self.road_length),
            ("lane_width", self.lane_width),
            ("pole_spacing", self.pole_spacing),
            ("pole_radius", self.pole_radius),
            ("lane_segment_length", self.lane_segment_length),
            ("marking_width", self.marking_width),
            ("paint_spacing", self.paint_spacing),
            ("ground_spacing", self.ground_spacing),
            ("pose_spacing", self.pose_spacing),
            ("speed", self.speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.lane_count == 0 {
            return bad("lane_count must be at least 1".into());
        }
        if self.pole_heights.is_empty() || self.pole_heights.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return bad("pole_heights must be a non-empty list of positive heights".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.pole_offset >= 0.0 && self.ground_margin >= 0.0) {
            return bad("pole_offset and ground_margin must be non-negative".into());
        }
        if self.paint_intensity[0] > self.paint_intensity[1] || self.ground_intensity[0] > self.ground_intensity[1] {
            return bad("intensity ranges must be ordered [low, high]".into());
        }
        let finite = self.origin.iter().chain([&self.heading, &self.ground_z, &self.sensor_height]);
        if finite.into_iter().any(|v| !v.is_finite()) {
            return bad("origin, heading, ground_z and sensor_height must be finite".into());
        }
        Ok(())
    }

    /// Lateral offsets of the lane lines, left positive.
    pub fn line_offsets(&self) -> Vec<f64> {
        let half = self.lane_count as f64 / 2.0;
        (0..=self.lane_count).map(|i| (i as f64 - half) * self.lane_width).collect()
    }

    /// Arc-length positions of the poles.
    pub fn pole_stations(&self) -> Vec<f64> {
        let n = (self.road_length / self.pole_spacing + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * self.pole_spacing).collect()
    }

    fn half_width(&self) -> f64 {
        self.lane_count as f64 / 2.0 * self.lane_width
    }

    /// Planar position of a road-frame point (arc length, lateral offset).
    fn world(&self, s: f64, l: f64) -> (f64, f64) {
        let (sin, cos) = self.heading.sin_cos();
        (self.origin[0] + s * cos - l * sin, self.origin[1] + s * sin + l * cos)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub cloud: PointCloud,
    pub trajectory: Trajectory,
    pub ground_truth: LabelSet,
}

struct Sampler {
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    dropout: f64,
    points: Vec<Point3>,
}

impl Sampler {
    fn emit(&mut self, x: f64, y: f64, z: f64, intensity: u16, time: f64) {
        if self.dropout > 0.0 && self.rng.random::<f64>() < self.dropout {
            return;
        }
        let (mut x, mut y, mut z) = (x, y, z);
        if let Some(n) = self.noise {
            x += n.sample(&mut self.rng);
            y += n.sample(&mut self.rng);
            z += n.sample(&mut self.rng);
        }
        self.points.push(Point3::new(x, y, z, intensity).with_time(time));
    }
}

fn steps(length: f64, spacing: f64) -> usize {
    (length / spacing).round().max(1.0) as usize
}

/// Builds a scene deterministically from `cfg` (including its seed).
pub fn generate_scene(cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let mut sampler = Sampler {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        noise: (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("sigma is finite")),
        dropout: cfg.dropout,
        points: Vec::new(),
    };
    let time = |s: f64| s / cfg.speed;
    let offsets = cfg.line_offsets();
    let pole_lateral = cfg.half_width() + cfg.pole_offset;
    let extent = pole_lateral + cfg.ground_margin;

    // ground
    let n_along = steps(cfg.road_length, cfg.ground_spacing);
    let n_across = steps(2.0 * extent, cfg.ground_spacing);
    let (da, dc) = (cfg.road_length / n_along as f64, 2.0 * extent / n_across as f64);
    for i in 0..n_along {
        let s = (i as f64 + 0.5) * da;
        for j in 0..n_across {
            let (x, y) = cfg.world(s, -extent + (j as f64 + 0.5) * dc);
            let intensity = sampler.rng.random_range(cfg.ground_intensity[0]..=cfg.ground_intensity[1]);
            sampler.emit(x, y, cfg.ground_z, intensity, time(s));
        }
    }

    // lane paint
    let n_along = steps(cfg.road_length, cfg.paint_spacing);
    let n_across = steps(cfg.marking_width, cfg.paint_spacing);
    let (da, dc) = (cfg.road_length / n_along as f64, cfg.marking_width / n_across as f64);
    let jitter = (cfg.paint_intensity[1] - cfg.paint_intensity[0]) / 20;
    for &l in &offsets {
        let base = sampler.rng.random_range(cfg.paint_intensity[0]..=cfg.paint_intensity[1]);
        let low = base.saturating_sub(jitter).max(cfg.paint_intensity[0]);
        let high = base.saturating_add(jitter).min(cfg.paint_intensity[1]);
        for i in 0..n_along {
            let s = (i as f64 + 0.5) * da;
            for j in 0..n_across {
                let (x, y) = cfg.world(s, l - cfg.marking_width / 2.0 + (j as f64 + 0.5) * dc);
                let intensity = sampler.rng.random_range(low..=high);
                sampler.emit(x, y, cfg.ground_z, intensity, time(s));
            }
        }
    }

    // poles: rings of 8 points every paint_spacing up to the apex
    let stations = cfg.pole_stations();
    let mut gt = Vec::new();
    for (k, &s) in stations.iter().enumerate() {
        let l = if k % 2 == 0 { -pole_lateral } else { pole_lateral };
        let (cx, cy) = cfg.world(s, l);
        let height = cfg.pole_heights[k % cfg.pole_heights.len()];
        let levels = steps(height, cfg.paint_spacing);
        for level in 1..=levels {
            let z = cfg.ground_z + height * level as f64 / levels as f64;
            for a in 0..8 {
                let angle = a as f64 * std::f64::consts::FRAC_PI_4;
                let (x, y) = (cx + cfg.pole_radius * angle.cos(), cy + cfg.pole_radius * angle.sin());
                sampler.emit(x, y, z, cfg.pole_intensity, time(s));
            }
        }
        let v = DescriptorVector::pole([cx, cy, cfg.ground_z + height], [cx, cy, cfg.ground_z])?;
        gt.push(Detection::new(format!("gt-pole-{k}"), v, 1.0, Source::Human)?);
    }

    // lane ground truth, one polyline per line per segment
    let segments = (cfg.road_length / cfg.lane_segment_length - 1e-9).ceil().max(1.0) as usize;
    for (i, &l) in offsets.iter().enumerate() {
        for j in 0..segments {
            let s0 = j as f64 * cfg.lane_segment_length;
            let s1 = ((j + 1) as f64 * cfg.lane_segment_length).min(cfg.road_length);
            let k = DEFAULT_POLYLINE_VERTICES;
            let vertices: Vec<[f64; 3]> = (0..k)
                .map(|v| {
                    let (x, y) = cfg.world(s0 + (s1 - s0) * v as f64 / (k - 1) as f64, l);
                    [x, y, cfg.ground_z]
                })
                .collect();
            let v = DescriptorVector::polyline(ObjectClass::LaneMarking, &vertices)?;
            gt.push(Detection::new(format!("gt-lane-{i}-{j}"), v, 1.0, Source::Human)?);
        }
    }

    let n_poses = steps(cfg.road_length, cfg.pose_spacing);
    let poses = (0..=n_poses)
        .map(|i| {
            let s = cfg.road_length * i as f64 / n_poses as f64;
            let (x, y) = cfg.world(s, 0.0);
            Pose::new(x, y, cfg.ground_z + cfg.sensor_height, cfg.heading, time(s))
        })
        .collect();

    Ok(SyntheticScene {
        cloud: PointCloud::new(Frame::PlanarMeters, sampler.points),
        trajectory: Trajectory::new(Frame::PlanarMeters, poses)?,
        ground_truth: LabelSet::new(gt).expect("generated ids are unique"),
    })
}
