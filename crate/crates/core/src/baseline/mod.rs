//! Synthetic scenes and heuristic detectors.
//!
//! The detectors stand in for trained networks: they produce confidence-scored
//! [`Detection`]s of the right shape so that refinement and routing can run end
//! to end. Their confidence formulas are monotone surrogates, not calibrated
//! probabilities.

mod lanes;
mod poles;
mod scene;

use thiserror::Error;

use crate::descriptor::{descriptor_distance, DescriptorError, Detection, ObjectClass};
use crate::pointcloud::PointCloudError;

pub use lanes::{detect_lane_markings, LaneDetector};
pub use poles::{detect_poles, PoleDetector};
pub use scene::{generate_scene, SceneConfig, SyntheticScene};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    PointCloud(#[from] PointCloudError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// Fraction of `class` ground-truth items that have a same-class prediction
/// within `max_distance`. `None` when there is no such ground truth.
pub fn recall(gt: &[Detection], predictions: &[Detection], class: ObjectClass, max_distance: f64) -> Option<f64> {
    let targets: Vec<&Detection> = gt.iter().filter(|d| d.class() == class).collect();
    if targets.is_empty() {
        return None;
    }
    let found = targets
        .iter()
        .filter(|g| {
            predictions.iter().filter(|p| p.class() == class).any(|p| {
                descriptor_distance(g.primary_vector(), p.primary_vector()).is_ok_and(|d| d <= max_distance)
            })
        })
        .count();
    Some(found as f64 / targets.len() as f64)
}
