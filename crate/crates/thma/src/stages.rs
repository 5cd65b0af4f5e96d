//! Individual pipeline stages. Each one reads its inputs from disk and writes
//! its artifact back, so any stage can be rerun on its own.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thma_core::active::{ReviewStore, RouteConfig};
use thma_core::baseline::{generate_scene, SceneConfig, SyntheticScene};
use thma_core::bev::{self, plan_tiles};
use thma_core::distill::{refine, RefinedLabelSet};
use thma_core::parallel::{self, Execution};
use thma_core::pointcloud::{self, Format};
use thma_core::{Detection, Frame, LabelSet, MatchConfig, PointCloud, TileFrame, Trajectory};

use crate::config::{DetectConfig, RasterConfig};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// File names of a scene directory.
#[derive(Debug, Clone)]
pub struct SceneFiles {
    pub cloud: PathBuf,
    pub trajectory: PathBuf,
    pub ground_truth: PathBuf,
    pub config: PathBuf,
}

impl SceneFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            cloud: dir.join("cloud.thpc"),
            trajectory: dir.join("trajectory.csv"),
            ground_truth: dir.join("ground_truth.json"),
            config: dir.join("scene.json"),
        }
    }
}

pub fn synth(cfg: &SceneConfig, dir: &Path) -> Result<SyntheticScene> {
    let scene = generate_scene(cfg)?;
    fs::create_dir_all(dir)?;
    let files = SceneFiles::in_dir(dir);
    pointcloud::save_point_cloud(&scene.cloud, &files.cloud, Format::BinaryV1)?;
    pointcloud::save_trajectory(&scene.trajectory, &files.trajectory)?;
    write_json(&files.ground_truth, &scene.ground_truth)?;
    write_json(&files.config, cfg)?;
    Ok(scene)
}

/// Loads a cloud and its trajectory, projecting geographic input to planar
/// metres. `frame` applies to CSV clouds and to the trajectory.
pub fn load_planar(cloud: &Path, trajectory: &Path, frame: Frame, exec: Execution) -> Result<(PointCloud, Trajectory)> {
    let cloud_data = pointcloud::load_point_cloud(cloud, Format::from_path(cloud, frame))
        .with_context(|| format!("loading {}", cloud.display()))?;
    let traj = pointcloud::load_trajectory(trajectory, frame)
        .with_context(|| format!("loading {}", trajectory.display()))?;
    let cloud_data = match cloud_data.frame() {
        Frame::Geographic => pointcloud::project_cloud(&cloud_data, exec)?,
        Frame::PlanarMeters => cloud_data,
    };
    let traj = match traj.frame() {
        Frame::Geographic => pointcloud::project_trajectory(&traj)?,
        Frame::PlanarMeters => traj,
    };
    Ok((cloud_data, traj))
}

pub fn load_cloud_planar(path: &Path, frame: Frame, exec: Execution) -> Result<PointCloud> {
    let cloud = pointcloud::load_point_cloud(path, Format::from_path(path, frame))
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(match cloud.frame() {
        Frame::Geographic => pointcloud::project_cloud(&cloud, exec)?,
        Frame::PlanarMeters => cloud,
    })
}

pub fn tile_id(k: usize) -> String {
    format!("tile_{k:04}")
}

/// Tile ids and image paths in a tile directory, in id order.
pub fn list_tiles(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut tiles = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(stem) = name.strip_suffix(".png") {
            if stem.starts_with("tile_") && !stem.ends_with(".occ") {
                tiles.push((stem.to_string(), path.clone()));
            }
        }
    }
    tiles.sort();
    Ok(tiles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterSummary {
    pub kept_points: usize,
    pub tiles: usize,
}

/// Filters the cloud around the trajectory, plans tiles along it and writes
/// them as `tile_NNNN.png` (plus occupancy mask and frame sidecar).
pub fn rasterize(
    cloud: &PointCloud,
    traj: &Trajectory,
    cfg: &RasterConfig,
    out: &Path,
    exec: Execution,
) -> Result<RasterSummary> {
    let filtered = cfg.filter().apply(cloud, traj, exec)?;
    let frames = plan_tiles(traj, &cfg.plan())?;
    let tiles = bev::rasterize_all(&filtered, &frames, exec)?;
    fs::create_dir_all(out)?;
    let written = parallel::map_range(tiles.len(), exec, |k| bev::write_tile(&tiles[k], out.join(tile_id(k) + ".png")));
    for w in written {
        w?;
    }
    Ok(RasterSummary { kept_points: filtered.len(), tiles: tiles.len() })
}

/// Lane markings from every tile plus poles from the planar cloud.
pub fn detect(tiles_dir: &Path, cloud: &PointCloud, cfg: &DetectConfig, exec: Execution) -> Result<LabelSet> {
    let tiles = list_tiles(tiles_dir)?;
    let lanes = cfg.lanes();
    let per_tile = parallel::map(&tiles, exec, |(id, path)| -> Result<(TileFrame, Vec<Detection>)> {
        let tile = bev::read_tile(path).with_context(|| format!("reading tile {}", path.display()))?;
        let found = lanes.detect(&tile, id);
        Ok((tile.frame, found))
    });
    let mut frames = Vec::with_capacity(tiles.len());
    let mut detections = Vec::new();
    for r in per_tile {
        let (frame, found) = r?;
        frames.push(frame);
        detections.extend(found);
    }
    for mut pole in cfg.poles().detect(cloud, exec)? {
        // pole layout: apex xyz, bottom xyz
        let v = pole.primary_vector().values();
        if let Some(k) = home_tile(&frames, v[3], v[4]) {
            pole = pole.on_tile(&tiles[k].0);
        }
        detections.push(pole);
    }
    Ok(LabelSet::new(detections)?)
}

/// The first tile containing the point, else the one with the nearest centre.
fn home_tile(frames: &[TileFrame], x: f64, y: f64) -> Option<usize> {
    frames.iter().position(|f| f.pixel_of(x, y).is_some()).or_else(|| {
        let d = |f: &TileFrame| (f.center[0] - x).hypot(f.center[1] - y);
        (0..frames.len()).min_by(|&a, &b| d(&frames[a]).total_cmp(&d(&frames[b])))
    })
}

pub fn refine_files(gt: &Path, pred: &Path, cfg: &MatchConfig) -> Result<RefinedLabelSet> {
    let gt: LabelSet = read_json(gt)?;
    let pred: LabelSet = read_json(pred)?;
    Ok(refine(&gt, &pred, cfg)?)
}

/// Routes predictions into the review store. Returns `(auto_accepted, queued)`.
pub fn route(pred: LabelSet, cfg: &RouteConfig, store: &Path) -> Result<(usize, usize)> {
    let mut store = ReviewStore::open(store)?;
    Ok(store.ingest(pred.into_items(), cfg)?)
}

pub fn export(store: &Path) -> Result<LabelSet> {
    Ok(ReviewStore::open(store)?.export_feedback())
}
