//! Refined ground truth from noisy labels and confidence-scored outputs.
//!
//! With `S_l` the outputs above `t_low` and `S_h` those above `t_high`, the
//! refined set is `(S_g ∩ S_l) ∪ S_h`. Set intersection between ground truth
//! and model output needs a correspondence, which is a greedy one-to-one
//! nearest-first matching under a descriptor-distance gate. Confirmed items
//! keep their ground-truth geometry; a high-confidence output matched to a
//! confirmed ground-truth item is dropped as a duplicate.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{descriptor_distance, Detection};

#[derive(Debug, Error, PartialEq)]
pub enum DistillError {
    #[error("invalid match config: {0}")]
    InvalidConfig(String),
    #[error("duplicate detection id {0:?}")]
    DuplicateId(String),
}

pub type Result<T> = std::result::Result<T, DistillError>;

/// Detections with unique ids. Serialized as a plain JSON array.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Detection>", into = "Vec<Detection>")]
pub struct LabelSet {
    items: Vec<Detection>,
}

impl LabelSet {
    pub fn new(items: Vec<Detection>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for d in &items {
            if !seen.insert(d.id.as_str()) {
                return Err(DistillError::DuplicateId(d.id.clone()));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[Detection] {
        &self.items
    }

    pub fn into_items(self) -> Vec<Detection> {
        self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Detection> {
        self.items.iter().find(|d| d.id == id)
    }
}

impl TryFrom<Vec<Detection>> for LabelSet {
    type Error = DistillError;
    fn try_from(items: Vec<Detection>) -> Result<Self> {
        LabelSet::new(items)
    }
}

impl From<LabelSet> for Vec<Detection> {
    fn from(s: LabelSet) -> Self {
        s.items
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Maximum descriptor distance for a pair to be matchable (metres).
    pub distance_threshold: f64,
    pub t_low: f64,
    pub t_high: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { distance_threshold: 0.5, t_low: 0.3, t_high: 0.8 }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.t_low) || !unit.contains(&self.t_high) {
            return Err(DistillError::InvalidConfig("thresholds must lie in [0, 1]".into()));
        }
        if self.t_low > self.t_high {
            return Err(DistillError::InvalidConfig(format!(
                "t_low {} exceeds t_high {}",
                self.t_low, self.t_high
            )));
        }
        if !(self.distance_threshold > 0.0) {
            return Err(DistillError::InvalidConfig("distance_threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Items with confidence strictly above `t`, in input order.
pub fn threshold_subset(outputs: &LabelSet, t: f64) -> LabelSet {
    LabelSet { items: outputs.items.iter().filter(|d| d.confidence() > t).cloned().collect() }
}

/// One accepted correspondence.
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub gt_id: String,
    pub output_id: String,
    pub distance: f64,
}

/// Greedy one-to-one matching: all same-class pairs within the distance gate,
/// ascending by distance (ties by gt id, then output id), each accepted when
/// both sides are still free.
pub fn match_labels(gt: &LabelSet, outputs: &LabelSet, cfg: &MatchConfig) -> Vec<Match> {
    let mut candidates = Vec::new();
    for (i, g) in gt.items.iter().enumerate() {
        for (j, o) in outputs.items.iter().enumerate() {
            if let Ok(d) = descriptor_distance(g.primary_vector(), o.primary_vector()) {
                if d <= cfg.distance_threshold {
                    candidates.push((d, i, j));
                }
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| gt.items[a.1].id.cmp(&gt.items[b.1].id))
            .then_with(|| outputs.items[a.2].id.cmp(&outputs.items[b.2].id))
    });
    let mut gt_used = vec![false; gt.len()];
    let mut out_used = vec![false; outputs.len()];
    let mut matches = Vec::new();
    for (d, i, j) in candidates {
        if gt_used[i] || out_used[j] {
            continue;
        }
        gt_used[i] = true;
        out_used[j] = true;
        matches.push(Match { gt_id: gt.items[i].id.clone(), output_id: outputs.items[j].id.clone(), distance: d });
    }
    matches
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Ground-truth item confirmed by a low-threshold output.
    ConfirmedGt,
    /// High-confidence output with no confirmed ground-truth counterpart.
    HighConfModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedItem {
    #[serde(flatten)]
    pub detection: Detection,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RefinedLabelSet {
    pub items: Vec<RefinedItem>,
}

impl RefinedLabelSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.items.iter().filter(|i| i.provenance == provenance).count()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.detection.id.as_str()).collect()
    }

    /// Plain label set, usable as ground truth for the next iteration.
    pub fn to_label_set(&self) -> Result<LabelSet> {
        LabelSet::new(self.items.iter().map(|i| i.detection.clone()).collect())
    }
}

/// Computes `(S_g ∩ S_l) ∪ S_h`. Ground-truth items come first (in ground-truth
/// order), followed by unmatched high-confidence outputs (in output order).
pub fn refine(gt: &LabelSet, outputs: &LabelSet, cfg: &MatchConfig) -> Result<RefinedLabelSet> {
    cfg.validate()?;
    let low = threshold_subset(outputs, cfg.t_low);
    let matches = match_labels(gt, &low, cfg);
    let confirmed: HashSet<&str> = matches.iter().map(|m| m.gt_id.as_str()).collect();
    let matched_outputs: HashSet<&str> = matches.iter().map(|m| m.output_id.as_str()).collect();

    let mut items: Vec<RefinedItem> = gt
        .items
        .iter()
        .filter(|g| confirmed.contains(g.id.as_str()))
        .map(|g| RefinedItem { detection: g.clone(), provenance: Provenance::ConfirmedGt })
        .collect();
    // every S_h item is also in S_l, so a matched one is paired with a confirmed gt
    items.extend(
        outputs
            .items
            .iter()
            .filter(|o| o.confidence() > cfg.t_high && !matched_outputs.contains(o.id.as_str()))
            .map(|o| RefinedItem { detection: o.clone(), provenance: Provenance::HighConfModel }),
    );
    Ok(RefinedLabelSet { items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{DescriptorVector, Source};

    fn pole(id: &str, x: f64, conf: f64, source: Source) -> Detection {
        Detection::new(id, DescriptorVector::pole([x, 0.0, 6.0], [x, 0.0, 0.0]).unwrap(), conf, source).unwrap()
    }

    fn set(items: Vec<Detection>) -> LabelSet {
        LabelSet::new(items).unwrap()
    }

    fn cfg(t_low: f64, t_high: f64) -> MatchConfig {
        MatchConfig { distance_threshold: 0.5, t_low, t_high }
    }

    #[test]
    fn threshold_subset_is_strict() {
        let s = set(vec![
            pole("a", 0.0, 0.2, Source::Model),
            pole("b", 1.0, 0.6, Source::Model),
            pole("c", 2.0, 0.9, Source::Model),
        ]);
        let ids = |l: LabelSet| l.items().iter().map(|d| d.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(threshold_subset(&s, 0.5)), vec!["b", "c"]);
        assert!(threshold_subset(&s, 1.0).is_empty());
        assert_eq!(threshold_subset(&s, 0.0).len(), 3);
        assert_eq!(threshold_subset(&s, 0.6).len(), 1);
    }

    #[test]
    fn matching_cases() {
        let gt = set(vec![pole("g", 0.0, 1.0, Source::Human)]);
        let one = set(vec![pole("o", 0.3, 0.9, Source::Model)]);
        assert_eq!(match_labels(&gt, &one, &cfg(0.3, 0.8)).len(), 1);

        let two = set(vec![pole("o1", 0.4, 0.9, Source::Model), pole("o2", 0.2, 0.9, Source::Model)]);
        let m = match_labels(&gt, &two, &cfg(0.3, 0.8));
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].output_id, "o2");

        let far = set(vec![pole("o", 0.8, 0.9, Source::Model)]);
        assert!(match_labels(&gt, &far, &cfg(0.3, 0.8)).is_empty());
    }

    #[test]
    fn matching_ties_break_by_id() {
        let gt = set(vec![pole("g2", 0.0, 1.0, Source::Human), pole("g1", 0.0, 1.0, Source::Human)]);
        let out = set(vec![pole("o", 0.1, 0.9, Source::Model)]);
        let m = match_labels(&gt, &out, &cfg(0.3, 0.8));
        assert_eq!(m[0].gt_id, "g1");
    }

    #[test]
    fn matching_skips_other_classes() {
        let gt = set(vec![pole("g", 0.0, 1.0, Source::Human)]);
        let cone = Detection::new(
            "c",
            DescriptorVector::cone([0.0, 0.0, 0.7], [0.0; 3], 0.2).unwrap(),
            0.9,
            Source::Model,
        )
        .unwrap();
        assert!(match_labels(&gt, &set(vec![cone]), &cfg(0.3, 0.8)).is_empty());
    }

    #[test]
    fn refine_confirms_gt() {
        let gt = set(vec![pole("g1", 0.0, 1.0, Source::Human)]);
        let out = set(vec![pole("o1", 0.1, 0.6, Source::Model)]);
        let r = refine(&gt, &out, &cfg(0.3, 0.8)).unwrap();
        assert_eq!(r.ids(), vec!["g1"]);
        assert_eq!(r.items[0].provenance, Provenance::ConfirmedGt);
        assert_eq!(r.items[0].detection, gt.items()[0]);
    }

    #[test]
    fn refine_empty_outputs_drops_everything() {
        let gt = set(vec![pole("g1", 0.0, 1.0, Source::Human), pole("g2", 5.0, 1.0, Source::Human)]);
        assert!(refine(&gt, &LabelSet::default(), &cfg(0.3, 0.8)).unwrap().is_empty());
    }

    #[test]
    fn refine_keeps_high_confidence_model_items() {
        let out = set(vec![pole("o2", 0.0, 0.9, Source::Model)]);
        let r = refine(&LabelSet::default(), &out, &cfg(0.3, 0.8)).unwrap();
        assert_eq!(r.ids(), vec!["o2"]);
        assert_eq!(r.items[0].provenance, Provenance::HighConfModel);
    }

    #[test]
    fn refine_dedups_high_conf_duplicate() {
        let gt = set(vec![pole("g1", 0.0, 1.0, Source::Human)]);
        let out = set(vec![pole("o1", 0.1, 0.95, Source::Model), pole("o2", 9.0, 0.95, Source::Model)]);
        let r = refine(&gt, &out, &cfg(0.3, 0.8)).unwrap();
        assert_eq!(r.ids(), vec!["g1", "o2"]);
    }

    #[test]
    fn config_and_ids_validated() {
        assert!(cfg(0.9, 0.1).validate().is_err());
        assert!(MatchConfig { distance_threshold: 0.0, ..MatchConfig::default() }.validate().is_err());
        assert_eq!(
            LabelSet::new(vec![pole("a", 0.0, 1.0, Source::Human), pole("a", 1.0, 1.0, Source::Human)]),
            Err(DistillError::DuplicateId("a".into()))
        );
    }

    #[test]
    fn json_shapes() {
        let gt = set(vec![pole("g1", 0.0, 1.0, Source::Human)]);
        let out = set(vec![pole("o1", 0.1, 0.6, Source::Model), pole("o2", 7.0, 0.9, Source::Model)]);
        let r = refine(&gt, &out, &cfg(0.3, 0.8)).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v[0]["provenance"], "confirmed_gt");
        assert_eq!(v[1]["provenance"], "high_conf_model");
        assert_eq!(serde_json::from_str::<RefinedLabelSet>(&text).unwrap(), r);
        // a refined file also reads as a plain label set
        let plain: LabelSet = serde_json::from_str(&text).unwrap();
        assert_eq!(plain.len(), 2);
        let dup = serde_json::to_string(&vec![gt.items()[0].clone(), gt.items()[0].clone()]).unwrap();
        assert!(serde_json::from_str::<LabelSet>(&dup).is_err());
    }
}
