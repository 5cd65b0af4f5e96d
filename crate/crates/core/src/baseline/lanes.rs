//! Lane-marking extraction from BEV tiles.

use crate::bev::{BevTile, CH_INTENSITY, CH_Z_MAX};
use crate::descriptor::{DescriptorVector, Detection, ObjectClass, Source, DEFAULT_POLYLINE_VERTICES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneDetector {
    /// Pixels with intensity strictly above this value are paint.
    pub intensity_threshold: u8,
    /// Components smaller than this are discarded as speckle.
    pub min_pixels: usize,
    /// Vertices of each emitted polyline.
    pub vertices: usize,
}

impl Default for LaneDetector {
    fn default() -> Self {
        Self { intensity_threshold: 128, min_pixels: 30, vertices: DEFAULT_POLYLINE_VERTICES }
    }
}

impl LaneDetector {
    /// Thresholds the intensity channel, splits the bright pixels into
    /// 8-connected components and traces each one into a polyline.
    ///
    /// Detection ids are `lane-<tile_id>-<k>` in component scan order.
    /// Confidence is the mean normalized intensity of the component.
    pub fn detect(&self, tile: &BevTile, tile_id: &str) -> Vec<Detection> {
        let n = tile.size() as usize;
        let bright: Vec<bool> = (0..n * n)
            .map(|i| tile.occupancy[i] && tile.channels[i * 3 + CH_INTENSITY] > self.intensity_threshold)
            .collect();
        let mut seen = vec![false; n * n];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..n * n {
            if !bright[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let mut component = Vec::new();
            while let Some(i) = stack.pop() {
                component.push(i);
                let (r, c) = ((i / n) as isize, (i % n) as isize);
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (rr, cc) = (r + dr, c + dc);
                        if rr < 0 || cc < 0 || rr >= n as isize || cc >= n as isize {
                            continue;
                        }
                        let j = rr as usize * n + cc as usize;
                        if bright[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            if component.len() < self.min_pixels {
                continue;
            }
            if let Some(d) = self.trace(tile, &component, &format!("lane-{tile_id}-{}", out.len())) {
                out.push(d.on_tile(tile_id));
            }
        }
        out
    }

    fn trace(&self, tile: &BevTile, component: &[usize], id: &str) -> Option<Detection> {
        let n = tile.size() as usize;
        let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
        for &i in component {
            r0 = r0.min(i / n);
            r1 = r1.max(i / n);
            c0 = c0.min(i % n);
            c1 = c1.max(i % n);
        }
        // Walk along the longer image axis, taking the centroid across it.
        let along_rows = r1 - r0 >= c1 - c0;
        let (lo, hi) = if along_rows { (r0, r1) } else { (c0, c1) };
        let mut sums = vec![(0.0, 0.0, 0usize); hi - lo + 1];
        let mut intensity = 0.0;
        for &i in component {
            let (r, c) = (i / n, i % n);
            let (key, across) = if along_rows { (r, c) } else { (c, r) };
            let entry = &mut sums[key - lo];
            entry.0 += across as f64;
            entry.1 += tile.frame.dequantize_z(tile.channels[i * 3 + CH_Z_MAX]);
            entry.2 += 1;
            intensity += tile.channels[i * 3 + CH_INTENSITY] as f64;
        }
        let mut trace: Vec<[f64; 3]> = sums
            .iter()
            .enumerate()
            .filter(|(_, s)| s.2 > 0)
            .map(|(k, s)| {
                let key = (lo + k) as f64 + 0.5;
                let across = s.0 / s.2 as f64 + 0.5;
                let (row, col) = if along_rows { (key, across) } else { (across, key) };
                let (x, y) = tile.frame.world_of(row, col);
                [x, y, s.1 / s.2 as f64]
            })
            .collect();
        if along_rows {
            // rows grow backwards; emit vertices in the travel direction
            trace.reverse();
        }
        let vertices = resample(&trace, self.vertices.max(2))?;
        let confidence = (intensity / component.len() as f64 / 255.0).clamp(0.0, 1.0);
        let vector = DescriptorVector::polyline(ObjectClass::LaneMarking, &vertices).ok()?;
        Detection::new(id, vector, confidence, Source::Baseline).ok()
    }
}

/// `k` points evenly spaced by arc length along `trace`.
fn resample(trace: &[[f64; 3]], k: usize) -> Option<Vec<[f64; 3]>> {
    if trace.len() < 2 {
        return None;
    }
    let mut cumulative = vec![0.0];
    for w in trace.windows(2) {
        let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2) + (w[1][2] - w[0][2]).powi(2)).sqrt();
        cumulative.push(cumulative.last().unwrap() + d);
    }
    let total = *cumulative.last().unwrap();
    if total <= 0.0 {
        return None;
    }
    let mut seg = 0;
    Some(
        (0..k)
            .map(|v| {
                let target = total * v as f64 / (k - 1) as f64;
                while seg + 2 < cumulative.len() && cumulative[seg + 1] < target {
                    seg += 1;
                }
                let span = cumulative[seg + 1] - cumulative[seg];
                let t = if span > 0.0 { ((target - cumulative[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
                let (a, b) = (trace[seg], trace[seg + 1]);
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
            })
            .collect(),
    )
}

/// [`LaneDetector`] with default settings and the given threshold.
pub fn detect_lane_markings(tile: &BevTile, tile_id: &str, intensity_threshold: u8) -> Vec<Detection> {
    LaneDetector { intensity_threshold, ..Default::default() }.detect(tile, tile_id)
}
