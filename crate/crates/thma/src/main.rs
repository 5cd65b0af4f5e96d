use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use thma::config::{DetectConfig, RasterConfig};
use thma::stages::{self, read_json, write_json};
use thma::{run_pipeline, PipelineConfig};
use thma_core::active::{ReviewStore, RouteConfig};
use thma_core::baseline::SceneConfig;
use thma_core::parallel::{self, Execution};
use thma_core::{Frame, LabelSet, MatchConfig};

#[derive(Parser)]
#[command(name = "thma", version, about = "HD-map auto-labeling pipeline")]
struct Cli {
    /// Worker threads for data-parallel work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameArg {
    Planar,
    Geographic,
}

impl From<FrameArg> for Frame {
    fn from(f: FrameArg) -> Frame {
        match f {
            FrameArg::Planar => Frame::PlanarMeters,
            FrameArg::Geographic => Frame::Geographic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene (cloud, trajectory, ground truth).
    Synth {
        /// Scene config JSON; defaults are used for missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter a cloud around its trajectory and rasterize BEV tiles.
    Rasterize {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        /// Frame of CSV clouds and of the trajectory.
        #[arg(long, value_enum, default_value = "planar")]
        frame: FrameArg,
        #[arg(long, default_value_t = 0.05)]
        res: f64,
        #[arg(long, default_value_t = 1024)]
        size: u32,
        #[arg(long, default_value_t = 0.0)]
        overlap: f64,
        #[arg(long, default_value_t = 1.0)]
        band_below: f64,
        #[arg(long, default_value_t = 3.0)]
        band_above: f64,
        /// Skip elevation filtering.
        #[arg(long)]
        no_filter: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the lane and pole detectors.
    Detect {
        #[arg(long)]
        tiles: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, value_enum, default_value = "planar")]
        frame: FrameArg,
        #[arg(long, default_value_t = 128)]
        threshold: u8,
        #[arg(long, default_value_t = 1.0)]
        pole_cell: f64,
        #[arg(long, default_value_t = 3.0)]
        pole_min_height: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine ground truth with confidence-scored predictions.
    Refine {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        tlow: f64,
        #[arg(long, default_value_t = 0.8)]
        thigh: f64,
        /// Maximum descriptor distance for a match, in metres.
        #[arg(long, default_value_t = 0.5)]
        dist: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Route predictions into a review store.
    Route {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        tauto: f64,
        #[arg(long)]
        store: PathBuf,
    },
    /// Serve the review API for a store.
    Serve {
        #[arg(long)]
        store: PathBuf,
        /// Directory of tiles referenced by the detections.
        #[arg(long)]
        tiles: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Export the feedback label set of a store.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print loop metrics of a store as JSON.
    Metrics {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 3600.0)]
        window: f64,
    },
    /// Run the whole pipeline from a config file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn require_store(path: &Path) -> Result<ReviewStore> {
    if !path.join(thma_core::active::EVENT_LOG).is_file() {
        bail!("{} is not a review store", path.display());
    }
    Ok(ReviewStore::open(path)?)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn execute(command: Command, jobs: usize) -> Result<()> {
    let exec = Execution::default();
    match command {
        Command::Synth { config, seed, out } => {
            let mut cfg: SceneConfig = match config {
                Some(p) => read_json(&p)?,
                None => SceneConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let scene = stages::synth(&cfg, &out)?;
            println!(
                "{} points, {} poses, {} ground-truth items -> {}",
                scene.cloud.len(),
                scene.trajectory.len(),
                scene.ground_truth.len(),
                out.display()
            );
        }
        Command::Rasterize { points, traj, frame, res, size, overlap, band_below, band_above, no_filter, out } => {
            let cfg = RasterConfig {
                resolution: res,
                size,
                overlap,
                band_below: (!no_filter).then_some(band_below),
                band_above: (!no_filter).then_some(band_above),
                ..Default::default()
            };
            cfg.plan().validate()?;
            cfg.filter().validate()?;
            let (cloud, traj) = stages::load_planar(&points, &traj, frame.into(), exec)?;
            let summary = stages::rasterize(&cloud, &traj, &cfg, &out, exec)?;
            println!("{} tiles from {} points -> {}", summary.tiles, summary.kept_points, out.display());
        }
        Command::Detect { tiles, cloud, frame, threshold, pole_cell, pole_min_height, out } => {
            let cfg = DetectConfig {
                intensity_threshold: threshold,
                pole_cell,
                pole_min_height,
                ..Default::default()
            };
            let cloud = stages::load_cloud_planar(&cloud, frame.into(), exec)?;
            let pred = stages::detect(&tiles, &cloud, &cfg, exec)?;
            write_json(&out, &pred)?;
            println!("{} detections -> {}", pred.len(), out.display());
        }
        Command::Refine { gt, pred, tlow, thigh, dist, out } => {
            let cfg = MatchConfig { distance_threshold: dist, t_low: tlow, t_high: thigh };
            let refined = stages::refine_files(&gt, &pred, &cfg)?;
            write_json(&out, &refined)?;
            println!("{} refined labels -> {}", refined.len(), out.display());
        }
        Command::Route { pred, tauto, store } => {
            let cfg = RouteConfig { t_auto: tauto };
            cfg.validate()?;
            let pred: LabelSet = read_json(&pred)?;
            let (auto, queued) = stages::route(pred, &cfg, &store)?;
            println!("{auto} auto-accepted, {queued} queued for review");
        }
        Command::Serve { store, tiles, host, port } => {
            let store = require_store(&store)?;
            let app = thma::server::app(store, tiles);
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(if jobs == 0 { 2 } else { jobs })
                .enable_all()
                .build()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .with_context(|| format!("binding {host}:{port}"))?;
                println!("listening on http://{}", listener.local_addr()?);
                std::io::stdout().flush()?;
                thma::server::serve(listener, app).await?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
        Command::Export { store, out } => {
            let feedback = require_store(&store)?.export_feedback();
            write_json(&out, &feedback)?;
            println!("{} feedback items -> {}", feedback.len(), out.display());
        }
        Command::Metrics { store, window } => {
            print_json(&require_store(&store)?.metrics(window)?)?;
        }
        Command::Run { config, seed, out } => {
            let mut cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.scene.seed = seed;
            }
            if let Some(out) = out {
                cfg.out = out;
            }
            if jobs != 0 {
                cfg.jobs = jobs;
            }
            let report = run_pipeline(&cfg)?;
            print_json(&report)?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let jobs = cli.jobs;
    parallel::with_jobs(jobs, || execute(cli.command, jobs))
}
