//! End-to-end pipeline run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use thma_core::baseline::recall;
use thma_core::distill::Provenance;
use thma_core::parallel::{self, Execution};
use thma_core::{Frame, LabelSet, ObjectClass};

use crate::config::PipelineConfig;
use crate::stages::{self, read_json, write_json, SceneFiles};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub input_points: usize,
    pub filtered_points: usize,
    pub tiles: usize,
    pub ground_truth: usize,
    pub lane_detections: usize,
    pub pole_detections: usize,
    pub detections: usize,
    pub refined_labels: usize,
    pub confirmed_gt: usize,
    pub high_conf_model: usize,
    pub auto_accepted: usize,
    pub queued: usize,
    pub feedback: usize,
}

/// Written to `report.json` in the output directory. Everything except
/// `timings_ms` is reproducible from the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Scene seed, absent when running on input files.
    pub seed: Option<u64>,
    pub counts: RunCounts,
    pub automation_ratio: Option<f64>,
    /// Share of ground-truth poles with a detection within the refine
    /// distance threshold.
    pub pole_recall: Option<f64>,
    /// Wall-clock milliseconds per stage.
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunReport {
    /// The report without wall-clock fields.
    pub fn deterministic(&self) -> RunReport {
        RunReport { timings_ms: BTreeMap::new(), ..self.clone() }
    }
}

/// Output layout of a run directory.
pub struct RunLayout {
    pub scene: std::path::PathBuf,
    pub tiles: std::path::PathBuf,
    pub predictions: std::path::PathBuf,
    pub refined: std::path::PathBuf,
    pub store: std::path::PathBuf,
    pub feedback: std::path::PathBuf,
    pub report: std::path::PathBuf,
}

impl RunLayout {
    pub fn new(out: &Path) -> Self {
        Self {
            scene: out.join("scene"),
            tiles: out.join("tiles"),
            predictions: out.join("pred.json"),
            refined: out.join("refined.json"),
            store: out.join("store"),
            feedback: out.join("feedback.json"),
            report: out.join("report.json"),
        }
    }
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().with_context(|| format!("{name} stage failed"))?;
        self.0.insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
        Ok(out)
    }
}

/// Validates the config, then runs synth, rasterize, detect, refine, route
/// and export in order, writing every artifact and the report under
/// `cfg.out`. Nothing is written when validation fails.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate().context("invalid pipeline config")?;
    parallel::with_jobs(cfg.jobs, || run_validated(cfg))
}

fn run_validated(cfg: &PipelineConfig) -> Result<RunReport> {
    let exec = Execution::default();
    let layout = RunLayout::new(&cfg.out);
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut timer = Timer(BTreeMap::new());
    let mut counts = RunCounts::default();

    let (files, frame) = match &cfg.inputs {
        Some(inputs) => (
            SceneFiles {
                cloud: inputs.cloud.clone(),
                trajectory: inputs.trajectory.clone(),
                ground_truth: inputs.ground_truth.clone(),
                config: cfg.out.join("scene.json"),
            },
            inputs.frame,
        ),
        None => {
            timer.stage("synth", || stages::synth(&cfg.scene, &layout.scene))?;
            (SceneFiles::in_dir(&layout.scene), Frame::PlanarMeters)
        }
    };

    let raster = timer.stage("rasterize", || {
        let (cloud, traj) = stages::load_planar(&files.cloud, &files.trajectory, frame, exec)?;
        counts.input_points = cloud.len();
        stages::rasterize(&cloud, &traj, &cfg.raster, &layout.tiles, exec)
    })?;
    counts.filtered_points = raster.kept_points;
    counts.tiles = raster.tiles;

    let predictions = timer.stage("detect", || {
        let cloud = stages::load_cloud_planar(&files.cloud, frame, exec)?;
        let pred = stages::detect(&layout.tiles, &cloud, &cfg.detect, exec)?;
        write_json(&layout.predictions, &pred)?;
        Ok(pred)
    })?;
    counts.detections = predictions.len();
    counts.lane_detections = predictions.items().iter().filter(|d| d.class() == ObjectClass::LaneMarking).count();
    counts.pole_detections = predictions.items().iter().filter(|d| d.class() == ObjectClass::Pole).count();

    let refined = timer.stage("refine", || {
        let refined = stages::refine_files(&files.ground_truth, &layout.predictions, &cfg.refine)?;
        write_json(&layout.refined, &refined)?;
        Ok(refined)
    })?;
    counts.refined_labels = refined.len();
    counts.confirmed_gt = refined.count(Provenance::ConfirmedGt);
    counts.high_conf_model = refined.count(Provenance::HighConfModel);

    let (auto, queued) = timer.stage("route", || {
        let pred: LabelSet = read_json(&layout.predictions)?;
        stages::route(pred, &cfg.route, &layout.store)
    })?;
    counts.auto_accepted = auto;
    counts.queued = queued;

    let feedback = timer.stage("export", || {
        let feedback = stages::export(&layout.store)?;
        write_json(&layout.feedback, &feedback)?;
        Ok(feedback)
    })?;
    counts.feedback = feedback.len();

    let gt: LabelSet = read_json(&files.ground_truth)?;
    counts.ground_truth = gt.len();
    let total = auto + queued;
    let report = RunReport {
        seed: cfg.inputs.is_none().then_some(cfg.scene.seed),
        counts,
        automation_ratio: (total > 0).then(|| auto as f64 / total as f64),
        pole_recall: recall(gt.items(), predictions.items(), ObjectClass::Pole, cfg.refine.distance_threshold),
        timings_ms: timer.0,
    };
    write_json(&layout.report, &report)?;
    Ok(report)
}
