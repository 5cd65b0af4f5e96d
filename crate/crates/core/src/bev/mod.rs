//! 2.5D bird's-eye-view tiles.
//!
//! A tile is a square raster centred on a trajectory sample and rotated so the
//! direction of travel points up (towards row 0). Channel 0 carries the
//! brightest reflection intensity that fell into a pixel, channel 1 the highest
//! z and channel 2 the lowest z, all quantized to 8 bits.

mod io;
mod plan;
mod raster;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pointcloud::{Frame, PointCloudError};

pub use io::{encode_channels_png, occupancy_path, read_tile, sidecar_path, write_tile, TileSidecar};
pub use plan::{plan_tiles, TilePlan};
pub use raster::{rasterize, rasterize_all, rasterize_indexed, rasterize_points};

pub const DEFAULT_RESOLUTION: f64 = 0.05;
pub const DEFAULT_SIZE: u32 = 1024;
pub const DEFAULT_Z_SPAN: f64 = 8.0;
pub const DEFAULT_INTENSITY_MAX: f64 = u16::MAX as f64;

#[derive(Debug, Error)]
pub enum BevError {
    #[error("invalid tile parameters: {0}")]
    InvalidParams(String),
    #[error("trajectory has no poses")]
    DegenerateTrajectory,
    #[error("expected a planar cloud/trajectory, got {0:?}")]
    FrameMismatch(Frame),
    #[error("malformed tile file {path}: {reason}")]
    MalformedTileFile { path: String, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    PointCloud(#[from] PointCloudError),
}

pub type Result<T> = std::result::Result<T, BevError>;

/// Georeferencing of one tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileFrame {
    /// Planar metres.
    pub center: [f64; 2],
    /// Travel direction, radians counterclockwise from +x.
    pub heading: f64,
    /// Metres per pixel.
    pub resolution: f64,
    /// Pixels per side.
    pub size: u32,
    pub ground_ref_z: f64,
    /// Vertical window, centred on `ground_ref_z`, mapped onto 0..=255.
    pub z_span: f64,
    /// Raw intensity mapped to 255.
    #[serde(default = "default_intensity_max")]
    pub intensity_max: f64,
}

fn default_intensity_max() -> f64 {
    DEFAULT_INTENSITY_MAX
}

/// Round half up, then clamp into a byte.
#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

impl TileFrame {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BevError::InvalidParams(m.to_string()));
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return bad("resolution must be positive");
        }
        if self.size == 0 {
            return bad("size must be positive");
        }
        if !(self.z_span > 0.0) || !self.z_span.is_finite() {
            return bad("z_span must be positive");
        }
        if !(self.intensity_max > 0.0) {
            return bad("intensity_max must be positive");
        }
        if !(self.center[0].is_finite() && self.center[1].is_finite() && self.heading.is_finite()) {
            return bad("center and heading must be finite");
        }
        if !self.ground_ref_z.is_finite() {
            return bad("ground_ref_z must be finite");
        }
        Ok(())
    }

    /// Side length in metres.
    pub fn footprint(&self) -> f64 {
        self.size as f64 * self.resolution
    }

    pub fn pixel_count(&self) -> usize {
        self.size as usize * self.size as usize
    }

    /// Continuous (row, col) of a planar point. Integer parts index pixels.
    #[inline]
    pub fn pixel_coords(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let forward = dx * c + dy * s;
        let left = dy * c - dx * s;
        let half = self.size as f64 / 2.0;
        (half - forward / self.resolution, half - left / self.resolution)
    }

    /// Pixel containing a planar point, if it falls inside the tile.
    #[inline]
    pub fn pixel_of(&self, x: f64, y: f64) -> Option<(u32, u32)> {
        let (row, col) = self.pixel_coords(x, y);
        let n = self.size as f64;
        if row >= 0.0 && row < n && col >= 0.0 && col < n {
            Some((row as u32, col as u32))
        } else {
            None
        }
    }

    /// Planar position of continuous pixel coordinates (inverse of
    /// [`TileFrame::pixel_coords`]).
    pub fn world_of(&self, row: f64, col: f64) -> (f64, f64) {
        let half = self.size as f64 / 2.0;
        let forward = (half - row) * self.resolution;
        let left = (half - col) * self.resolution;
        let (s, c) = self.heading.sin_cos();
        (
            self.center[0] + forward * c - left * s,
            self.center[1] + forward * s + left * c,
        )
    }

    /// Axis-aligned bounds of the rotated footprint: `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let (s, c) = self.heading.sin_cos();
        let half = self.footprint() / 2.0;
        let ex = half * (c.abs() + s.abs());
        let pad = self.resolution;
        (
            self.center[0] - ex - pad,
            self.center[1] - ex - pad,
            self.center[0] + ex + pad,
            self.center[1] + ex + pad,
        )
    }

    #[inline]
    pub fn quantize_intensity(&self, raw: u16) -> u8 {
        quantize(raw as f64 / self.intensity_max * 255.0)
    }

    #[inline]
    pub fn quantize_z(&self, z: f64) -> u8 {
        let low = self.ground_ref_z - self.z_span / 2.0;
        quantize((z - low) / self.z_span * 255.0)
    }

    /// Centre of the z bin a quantized value represents.
    pub fn dequantize_z(&self, q: u8) -> f64 {
        self.ground_ref_z - self.z_span / 2.0 + q as f64 / 255.0 * self.z_span
    }
}

/// Three-channel 8-bit raster plus per-pixel occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct BevTile {
    pub frame: TileFrame,
    /// Row-major, 3 interleaved channels per pixel.
    pub channels: Vec<u8>,
    pub occupancy: Vec<bool>,
}

pub const CH_INTENSITY: usize = 0;
pub const CH_Z_MAX: usize = 1;
pub const CH_Z_MIN: usize = 2;

impl BevTile {
    pub fn empty(frame: TileFrame) -> BevTile {
        let n = frame.pixel_count();
        BevTile { frame, channels: vec![0; n * 3], occupancy: vec![false; n] }
    }

    pub fn size(&self) -> u32 {
        self.frame.size
    }

    #[inline]
    pub fn pixel(&self, row: u32, col: u32) -> [u8; 3] {
        let i = (row as usize * self.size() as usize + col as usize) * 3;
        [self.channels[i], self.channels[i + 1], self.channels[i + 2]]
    }

    #[inline]
    pub fn occupied(&self, row: u32, col: u32) -> bool {
        self.occupancy[row as usize * self.size() as usize + col as usize]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Checks the channel invariants: highest >= lowest on occupied pixels and
    /// all-zero unoccupied pixels.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.channels.len() != self.frame.pixel_count() * 3 || self.occupancy.len() != self.frame.pixel_count() {
            return Err("buffer sizes do not match frame size".into());
        }
        for (i, &occ) in self.occupancy.iter().enumerate() {
            let px = &self.channels[i * 3..i * 3 + 3];
            if occ && px[CH_Z_MAX] < px[CH_Z_MIN] {
                return Err(format!("pixel {i}: highest {} < lowest {}", px[1], px[2]));
            }
            if !occ && px.iter().any(|&v| v != 0) {
                return Err(format!("pixel {i}: unoccupied but non-zero"));
            }
        }
        Ok(())
    }
}
