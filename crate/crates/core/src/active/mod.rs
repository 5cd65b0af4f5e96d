//! Confidence routing and the human review loop.
//!
//! Detections above `t_auto` go straight to production; the rest become
//! pending [`ReviewItem`]s. Reviewers accept, reject or relabel each item
//! exactly once. Everything is recorded in an append-only event log (see
//! [`ReviewStore`]) from which the queue, feedback export and metrics are
//! derived.

mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::json::{DetectionJson, SlotJson};
use crate::descriptor::{Detection, ObjectClass, Source};

pub use store::{Event, ReviewStore, EVENT_LOG};

#[derive(Debug, Error)]
pub enum ActiveError {
    #[error("invalid route config: {0}")]
    InvalidConfig(String),
    #[error("no review item {0:?}")]
    NotFound(String),
    #[error("review item {0:?} was already decided")]
    AlreadyDecided(String),
    #[error("detection id {0:?} is already in the store")]
    DuplicateId(String),
    #[error("malformed decision: {0}")]
    Malformed(String),
    #[error("event log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("window must be positive, got {0}")]
    InvalidWindow(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ActiveError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteConfig {
    /// Detections with confidence strictly above this skip review.
    pub t_auto: f64,
}

impl Default for RouteConfig {
    fn default() -> Self {
        Self { t_auto: 0.7 }
    }
}

impl RouteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.t_auto) {
            return Err(ActiveError::InvalidConfig(format!("t_auto {} outside [0, 1]", self.t_auto)));
        }
        Ok(())
    }
}

/// Splits detections into the auto-accepted stream and the review queue,
/// preserving order on both sides.
pub fn route(detections: Vec<Detection>, cfg: &RouteConfig) -> Result<(Vec<Detection>, Vec<Detection>)> {
    cfg.validate()?;
    Ok(detections.into_iter().partition(|d| d.confidence() > cfg.t_auto))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Accepted,
    Rejected,
    Relabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    /// Same as the detection id.
    pub id: String,
    pub detection: Detection,
    pub status: Status,
    /// Human replacement, present exactly when `status` is `Relabeled`.
    pub relabel: Option<Detection>,
    /// Unix seconds.
    pub created: f64,
    pub decided: Option<f64>,
    pub reviewer: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Accept,
    Reject,
    /// Replacement geometry; stored with source `Human`, confidence 1 and the
    /// reviewed item's id.
    Relabel(Detection),
}

/// Replacement geometry as sent by a reviewer. Identity, confidence and
/// source are implied by the item being relabeled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelabelPayload {
    pub class: ObjectClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<Vec<SlotJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<String>,
}

/// Request body of a decision: `{decision: "accept" | "reject" | "relabel",
/// relabel?: {...}, reviewer?: "..."}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub decision: String,
    #[serde(default)]
    pub relabel: Option<RelabelPayload>,
    #[serde(default)]
    pub reviewer: Option<String>,
}

impl DecisionRequest {
    pub fn into_decision(self, item_id: &str) -> Result<Decision> {
        match (self.decision.as_str(), self.relabel) {
            ("accept", None) => Ok(Decision::Accept),
            ("reject", None) => Ok(Decision::Reject),
            ("relabel", Some(p)) => {
                let json = DetectionJson {
                    id: item_id.to_string(),
                    class: p.class,
                    values: p.values,
                    slots: p.slots,
                    confidence: 1.0,
                    source: Source::Human,
                    tile: p.tile,
                };
                Detection::try_from(json).map(Decision::Relabel).map_err(|e| ActiveError::Malformed(e.to_string()))
            }
            ("relabel", None) => Err(ActiveError::Malformed("relabel requires a replacement payload".into())),
            ("accept" | "reject", Some(_)) => {
                Err(ActiveError::Malformed("only relabel decisions carry a replacement".into()))
            }
            (other, _) => Err(ActiveError::Malformed(format!("unknown decision {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopMetrics {
    pub total: usize,
    pub auto_accepted: usize,
    /// Items routed to human review, whatever their current status.
    pub reviewed: usize,
    pub pending: usize,
    /// `auto_accepted / total`, absent when nothing has been routed.
    pub automation_ratio: Option<f64>,
    pub window_seconds: f64,
    /// Items that reached a final state (auto-accepted or decided) inside the
    /// window.
    pub completed_in_window: usize,
    /// `completed_in_window / window_seconds`.
    pub throughput: f64,
}

pub(crate) fn now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}
