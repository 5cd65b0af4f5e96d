//! Pole extraction by xy grid clustering of a planar cloud.

use std::collections::{BTreeSet, HashMap};

use super::Result;
use crate::descriptor::{DescriptorVector, Detection, Source};
use crate::parallel::{self, Execution};
use crate::pointcloud::{Frame, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleDetector {
    /// Grid cell side in metres.
    pub cell: f64,
    /// Minimum vertical extent of a pole.
    pub min_height: f64,
    /// Points this far above the lowest point of their cell count as
    /// structure rather than ground.
    pub ground_clearance: f64,
}

impl Default for PoleDetector {
    fn default() -> Self {
        Self { cell: 1.0, min_height: 3.0, ground_clearance: 0.3 }
    }
}

type Cell = (i64, i64);

impl PoleDetector {
    /// Cells whose vertical extent reaches `min_height` are merged with their
    /// 8-neighbours; a merged group whose raised points span at most `cell / 2`
    /// in x and y becomes a pole from its lowest to its highest point, placed at
    /// the xy centroid of the raised points. Confidence is
    /// `min(1, extent / (2 * min_height))`.
    ///
    /// Detection ids are `pole-<k>`, ordered by grid cell.
    pub fn detect(&self, cloud: &PointCloud, exec: Execution) -> Result<Vec<Detection>> {
        cloud.require_frame(Frame::PlanarMeters)?;
        if !(self.cell > 0.0) || !(self.min_height > 0.0) || !(self.ground_clearance >= 0.0) {
            return Err(super::BaselineError::InvalidConfig(
                "cell and min_height must be positive, ground_clearance non-negative".into(),
            ));
        }
        let points = cloud.points();
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            let key = ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64);
            cells.entry(key).or_default().push(i as u32);
        }
        let z_range = |ids: &[u32]| {
            ids.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(points[i as usize].z), hi.max(points[i as usize].z))
            })
        };
        let candidates: BTreeSet<Cell> = cells
            .iter()
            .filter(|(_, ids)| {
                let (lo, hi) = z_range(ids);
                hi - lo >= self.min_height
            })
            .map(|(&k, _)| k)
            .collect();

        let mut groups: Vec<Vec<Cell>> = Vec::new();
        let mut assigned = BTreeSet::new();
        for &start in &candidates {
            if !assigned.insert(start) {
                continue;
            }
            let mut group = vec![start];
            let mut at = 0;
            while at < group.len() {
                let (cx, cy) = group[at];
                at += 1;
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let next = (cx + dx, cy + dy);
                        if candidates.contains(&next) && assigned.insert(next) {
                            group.push(next);
                        }
                    }
                }
            }
            groups.push(group);
        }

        let poles = parallel::map(&groups, exec, |group| {
            let mut bottom = f64::INFINITY;
            let mut top = f64::NEG_INFINITY;
            let (mut min_x, mut min_y, mut max_x, mut max_y) =
                (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
            for key in group {
                let ids = &cells[key];
                let (lo, _) = z_range(ids);
                bottom = bottom.min(lo);
                for &i in ids {
                    let p = &points[i as usize];
                    if p.z <= lo + self.ground_clearance {
                        continue;
                    }
                    top = top.max(p.z);
                    min_x = min_x.min(p.x);
                    max_x = max_x.max(p.x);
                    min_y = min_y.min(p.y);
                    max_y = max_y.max(p.y);
                    sx += p.x;
                    sy += p.y;
                    count += 1;
                }
            }
            let extent = top - bottom;
            let slim = (max_x - min_x).max(max_y - min_y) <= self.cell / 2.0;
            (count > 0 && slim && extent >= self.min_height).then(|| {
                let (x, y) = (sx / count as f64, sy / count as f64);
                ([x, y, top], [x, y, bottom], (extent / (2.0 * self.min_height)).min(1.0))
            })
        });

        let mut out = Vec::new();
        for (apex, bottom, confidence) in poles.into_iter().flatten() {
            let v = DescriptorVector::pole(apex, bottom)?;
            out.push(Detection::new(format!("pole-{}", out.len()), v, confidence, Source::Baseline)?);
        }
        Ok(out)
    }
}

/// [`PoleDetector`] with the given cell and height and default clearance.
pub fn detect_poles(cloud: &PointCloud, cell: f64, min_height: f64) -> Result<Vec<Detection>> {
    PoleDetector { cell, min_height, ..Default::default() }.detect(cloud, Execution::default())
}
