//! Point-to-pixel aggregation.
//!
//! Raw extrema (max intensity, max z, min z) are accumulated per pixel and
//! quantized once at the end. Quantization is monotone, so this equals taking
//! extrema of per-point quantized values.

use super::{BevError, BevTile, Result, TileFrame};
use crate::parallel::{self, Execution};
use crate::pointcloud::{Frame, GridIndex, Point3, PointCloud};

struct Accumulator {
    max_intensity: Vec<u16>,
    max_z: Vec<f64>,
    min_z: Vec<f64>,
    occupied: Vec<bool>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self {
            max_intensity: vec![0; n],
            max_z: vec![f64::NEG_INFINITY; n],
            min_z: vec![f64::INFINITY; n],
            occupied: vec![false; n],
        }
    }

    #[inline]
    fn add(&mut self, i: usize, p: &Point3) {
        self.occupied[i] = true;
        self.max_intensity[i] = self.max_intensity[i].max(p.intensity);
        if p.z > self.max_z[i] {
            self.max_z[i] = p.z;
        }
        if p.z < self.min_z[i] {
            self.min_z[i] = p.z;
        }
    }

    fn finish(self, frame: &TileFrame) -> BevTile {
        let mut tile = BevTile::empty(*frame);
        for (i, &occ) in self.occupied.iter().enumerate() {
            if !occ {
                continue;
            }
            let px = &mut tile.channels[i * 3..i * 3 + 3];
            px[0] = frame.quantize_intensity(self.max_intensity[i]);
            px[1] = frame.quantize_z(self.max_z[i]);
            px[2] = frame.quantize_z(self.min_z[i]);
        }
        tile.occupancy = self.occupied;
        tile
    }
}

/// Rasterizes any collection of planar points into `frame`. Points outside
/// the footprint are ignored.
pub fn rasterize_points<'a>(points: impl IntoIterator<Item = &'a Point3>, frame: &TileFrame) -> BevTile {
    let size = frame.size as usize;
    let mut acc = Accumulator::new(frame.pixel_count());
    for p in points {
        if let Some((row, col)) = frame.pixel_of(p.x, p.y) {
            acc.add(row as usize * size + col as usize, p);
        }
    }
    acc.finish(frame)
}

/// Rasterizes a whole planar cloud into one tile.
pub fn rasterize(cloud: &PointCloud, frame: &TileFrame) -> Result<BevTile> {
    check(cloud, frame)?;
    Ok(rasterize_points(cloud.points(), frame))
}

/// Rasterizes only the points whose index cells overlap the tile footprint.
pub fn rasterize_indexed(cloud: &PointCloud, index: &GridIndex, frame: &TileFrame) -> Result<BevTile> {
    check(cloud, frame)?;
    let (x0, y0, x1, y1) = frame.bounds();
    let candidates = index.query_box(x0, y0, x1, y1);
    let points = cloud.points();
    Ok(rasterize_points(candidates.iter().map(|&i| &points[i as usize]), frame))
}

/// Rasterizes a set of frames against a shared read-only grid index, one
/// frame per task.
pub fn rasterize_all(cloud: &PointCloud, frames: &[TileFrame], exec: Execution) -> Result<Vec<BevTile>> {
    if cloud.frame() != Frame::PlanarMeters {
        return Err(BevError::FrameMismatch(cloud.frame()));
    }
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let cell = (first.footprint() / 4.0).max(first.resolution);
    let index = GridIndex::build(cloud.points(), cell);
    parallel::map(frames, exec, |frame| rasterize_indexed(cloud, &index, frame))
        .into_iter()
        .collect()
}

fn check(cloud: &PointCloud, frame: &TileFrame) -> Result<()> {
    if cloud.frame() != Frame::PlanarMeters {
        return Err(BevError::FrameMismatch(cloud.frame()));
    }
    frame.validate()
}
