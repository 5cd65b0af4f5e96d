//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use thma_core::active::RouteConfig;
use thma_core::baseline::{LaneDetector, PoleDetector, SceneConfig};
use thma_core::bev::TilePlan;
use thma_core::pointcloud::ElevationFilter;
use thma_core::{Frame, MatchConfig};

/// Existing files to run on instead of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub cloud: PathBuf,
    pub trajectory: PathBuf,
    pub ground_truth: PathBuf,
    /// Frame of CSV clouds and of the trajectory.
    #[serde(default = "planar")]
    pub frame: Frame,
}

fn planar() -> Frame {
    Frame::PlanarMeters
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    pub resolution: f64,
    pub size: u32,
    pub overlap: f64,
    pub z_span: f64,
    pub intensity_max: f64,
    pub sensor_height: f64,
    /// Elevation band kept around the ground estimate; `null` keeps everything.
    pub band_below: Option<f64>,
    pub band_above: Option<f64>,
}

impl Default for RasterConfig {
    fn default() -> Self {
        let plan = TilePlan::default();
        let filter = ElevationFilter::default();
        Self {
            resolution: plan.resolution,
            size: plan.size,
            overlap: plan.overlap,
            z_span: plan.z_span,
            intensity_max: plan.intensity_max,
            sensor_height: plan.sensor_height,
            band_below: Some(filter.band_below),
            band_above: Some(filter.band_above),
        }
    }
}

impl RasterConfig {
    pub fn plan(&self) -> TilePlan {
        TilePlan {
            resolution: self.resolution,
            size: self.size,
            overlap: self.overlap,
            sensor_height: self.sensor_height,
            z_span: self.z_span,
            intensity_max: self.intensity_max,
        }
    }

    pub fn filter(&self) -> ElevationFilter {
        ElevationFilter {
            band_below: self.band_below.unwrap_or(f64::INFINITY),
            band_above: self.band_above.unwrap_or(f64::INFINITY),
            sensor_height: self.sensor_height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub intensity_threshold: u8,
    pub min_pixels: usize,
    pub pole_cell: f64,
    pub pole_min_height: f64,
    pub pole_ground_clearance: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        let lanes = LaneDetector::default();
        let poles = PoleDetector::default();
        Self {
            intensity_threshold: lanes.intensity_threshold,
            min_pixels: lanes.min_pixels,
            pole_cell: poles.cell,
            pole_min_height: poles.min_height,
            pole_ground_clearance: poles.ground_clearance,
        }
    }
}

impl DetectConfig {
    pub fn lanes(&self) -> LaneDetector {
        LaneDetector { intensity_threshold: self.intensity_threshold, min_pixels: self.min_pixels, ..Default::default() }
    }

    pub fn poles(&self) -> PoleDetector {
        PoleDetector {
            cell: self.pole_cell,
            min_height: self.pole_min_height,
            ground_clearance: self.pole_ground_clearance,
        }
    }
}

/// Everything `thma run` needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Output directory; must be absent or empty.
    pub out: PathBuf,
    pub scene: SceneConfig,
    /// When set, the scene is not generated.
    pub inputs: Option<Inputs>,
    pub raster: RasterConfig,
    pub detect: DetectConfig,
    pub refine: MatchConfig,
    pub route: RouteConfig,
    /// Worker threads for data-parallel stages; 0 uses every core.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("run"),
            scene: SceneConfig::default(),
            inputs: None,
            raster: RasterConfig::default(),
            detect: DetectConfig::default(),
            refine: MatchConfig::default(),
            route: RouteConfig::default(),
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.out = base.join(&cfg.out);
        if let Some(inputs) = &mut cfg.inputs {
            for p in [&mut inputs.cloud, &mut inputs.trajectory, &mut inputs.ground_truth] {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Checks parameters and paths without touching the filesystem.
    pub fn validate(&self) -> Result<()> {
        match &self.inputs {
            Some(inputs) => {
                for p in [&inputs.cloud, &inputs.trajectory, &inputs.ground_truth] {
                    ensure!(p.is_file(), "input file {} does not exist", p.display());
                }
            }
            None => self.scene.validate()?,
        }
        self.raster.plan().validate()?;
        self.raster.filter().validate()?;
        self.refine.validate()?;
        self.route.validate()?;
        let d = &self.detect;
        ensure!(d.pole_cell > 0.0 && d.pole_min_height > 0.0, "pole_cell and pole_min_height must be positive");
        ensure!(d.pole_ground_clearance >= 0.0, "pole_ground_clearance must be non-negative");
        if self.out.exists() {
            let empty = self.out.is_dir() && std::fs::read_dir(&self.out)?.next().is_none();
            if !empty {
                bail!("output directory {} exists and is not empty", self.out.display());
            }
        }
        Ok(())
    }
}
