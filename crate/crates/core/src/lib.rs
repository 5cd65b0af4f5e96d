//! Core library for a desk-scale HD-map auto-labeling pipeline.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`pointcloud`]: point/trajectory model, file I/O, Web Mercator
//!   projection and trajectory-relative elevation filtering.
//! - [`bev`]: tile planning along a trajectory and 2.5D bird's-eye-view
//!   rasterization (intensity, highest z, lowest z).
//! - [`descriptor`]: per-class object descriptor vectors, multi-object
//!   activation and derived geometry.
//! - [`distill`]: refined ground truth from ground truth and confidence-scored
//!   model outputs.
//! - [`segnumerics`]: forward-only reference kernels for sequence-reduction
//!   attention, Mix-FFN and MAE patch masking.
//! - [`baseline`]: synthetic scene generator and heuristic detectors.
//! - [`active`]: confidence routing, the durable review store, feedback export
//!   and automation metrics.
//!
//! Data-parallel loops go through [`parallel`], which falls back to sequential
//! iteration when the `parallel` feature is disabled.

pub mod active;
pub mod baseline;
pub mod bev;
pub mod descriptor;
pub mod distill;
pub mod parallel;
pub mod pointcloud;
pub mod segnumerics;

pub use bev::{BevTile, TileFrame};

pub use descriptor::{Detection, DescriptorVector, MultiObjectDescriptor, ObjectClass, Source};
pub use distill::{LabelSet, MatchConfig, RefinedLabelSet};
pub use pointcloud::{Frame, Point3, PointCloud, Pose, Trajectory};
