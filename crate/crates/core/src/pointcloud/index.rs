//! Uniform xy grids: a bucketed point index for tile queries and a
//! nearest-pose lookup for trajectory-relative ground estimates.

use super::{Point3, Pose};

const MAX_CELLS: usize = 1 << 22;

#[derive(Debug, Clone)]
struct Grid {
    min_x: f64,
    min_y: f64,
    cell: f64,
    nx: usize,
    ny: usize,
}

impl Grid {
    fn covering(xy: impl Iterator<Item = (f64, f64)> + Clone, cell: f64) -> Grid {
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (x, y) in xy {
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
        if !min_x.is_finite() {
            return Grid { min_x: 0.0, min_y: 0.0, cell: 1.0, nx: 1, ny: 1 };
        }
        let mut cell = cell.max(1e-6);
        loop {
            let nx = ((max_x - min_x) / cell).floor() as usize + 1;
            let ny = ((max_y - min_y) / cell).floor() as usize + 1;
            if nx.saturating_mul(ny) <= MAX_CELLS {
                return Grid { min_x, min_y, cell, nx, ny };
            }
            cell *= 2.0;
        }
    }

    fn clamp_cell(&self, x: f64, y: f64) -> (usize, usize) {
        let cx = ((x - self.min_x) / self.cell).floor();
        let cy = ((y - self.min_y) / self.cell).floor();
        (
            cx.clamp(0.0, (self.nx - 1) as f64) as usize,
            cy.clamp(0.0, (self.ny - 1) as f64) as usize,
        )
    }

    fn id(&self, cx: usize, cy: usize) -> usize {
        cy * self.nx + cx
    }
}

/// Points bucketed by xy cell in compressed-row form.
#[derive(Debug, Clone)]
pub struct GridIndex {
    grid: Grid,
    starts: Vec<u32>,
    order: Vec<u32>,
}

impl GridIndex {
    pub fn build(points: &[Point3], cell: f64) -> GridIndex {
        assert!(points.len() < u32::MAX as usize, "too many points for a u32 index");
        let grid = Grid::covering(points.iter().map(|p| (p.x, p.y)), cell);
        let ids: Vec<u32> = points
            .iter()
            .map(|p| {
                let (cx, cy) = grid.clamp_cell(p.x, p.y);
                grid.id(cx, cy) as u32
            })
            .collect();
        let ncells = grid.nx * grid.ny;
        let mut starts = vec![0u32; ncells + 1];
        for &id in &ids {
            starts[id as usize + 1] += 1;
        }
        for i in 0..ncells {
            starts[i + 1] += starts[i];
        }
        let mut fill = starts.clone();
        let mut order = vec![0u32; points.len()];
        for (i, &id) in ids.iter().enumerate() {
            let slot = &mut fill[id as usize];
            order[*slot as usize] = i as u32;
            *slot += 1;
        }
        GridIndex { grid, starts, order }
    }

    /// Indices of every point whose cell intersects the axis-aligned box.
    /// The result is a superset of the points inside the box.
    pub fn query_box(&self, min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Vec<u32> {
        let g = &self.grid;
        if max_x < g.min_x
            || max_y < g.min_y
            || min_x > g.min_x + g.nx as f64 * g.cell
            || min_y > g.min_y + g.ny as f64 * g.cell
        {
            return Vec::new();
        }
        let (x0, y0) = g.clamp_cell(min_x, min_y);
        let (x1, y1) = g.clamp_cell(max_x, max_y);
        let mut out = Vec::new();
        for cy in y0..=y1 {
            let a = self.starts[g.id(x0, cy)] as usize;
            let b = self.starts[g.id(x1, cy) + 1] as usize;
            out.extend_from_slice(&self.order[a..b]);
        }
        out
    }
}

/// Nearest pose in the xy plane, ties broken by lower pose index.
#[derive(Debug, Clone)]
pub struct PoseIndex {
    grid: Grid,
    xy: Vec<(f64, f64)>,
    cells: Vec<Vec<u32>>,
}

impl PoseIndex {
    pub fn new(poses: &[Pose]) -> PoseIndex {
        let xy: Vec<(f64, f64)> = poses.iter().map(|p| (p.position.x, p.position.y)).collect();
        let mut grid = Grid::covering(xy.iter().copied(), 1.0);
        // aim for a handful of poses per cell
        let extent = ((grid.nx as f64) * grid.cell).max((grid.ny as f64) * grid.cell);
        let cell = (extent / (xy.len() as f64).sqrt().max(1.0)).max(0.5);
        grid = Grid::covering(xy.iter().copied(), cell);
        let mut cells = vec![Vec::new(); grid.nx * grid.ny];
        for (i, &(x, y)) in xy.iter().enumerate() {
            let (cx, cy) = grid.clamp_cell(x, y);
            cells[grid.id(cx, cy)].push(i as u32);
        }
        PoseIndex { grid, xy, cells }
    }

    /// Index of the nearest pose, or `None` for an empty index.
    pub fn nearest(&self, x: f64, y: f64) -> Option<usize> {
        if self.xy.is_empty() {
            return None;
        }
        let g = &self.grid;
        let (cx, cy) = g.clamp_cell(x, y);
        let mut best: Option<(f64, u32)> = None;
        let max_ring = g.nx.max(g.ny);
        for ring in 0..=max_ring {
            let x0 = cx as isize - ring as isize;
            let x1 = cx as isize + ring as isize;
            let y0 = cy as isize - ring as isize;
            let y1 = cy as isize + ring as isize;
            for gy in y0..=y1 {
                if gy < 0 || gy >= g.ny as isize {
                    continue;
                }
                let on_edge_row = gy == y0 || gy == y1;
                let mut gx = x0;
                while gx <= x1 {
                    if gx >= 0 && gx < g.nx as isize {
                        for &i in &self.cells[g.id(gx as usize, gy as usize)] {
                            let (px, py) = self.xy[i as usize];
                            let d = (px - x).powi(2) + (py - y).powi(2);
                            if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                                best = Some((d, i));
                            }
                        }
                    }
                    // interior rows only need the two edge columns
                    gx += if on_edge_row || ring == 0 { 1 } else { (x1 - x0).max(1) };
                }
            }
            if let Some((bd, _)) = best {
                // the projection of the query onto the grid sits in the centre
                // cell, so anything beyond this ring is at least ring*cell away
                let bound = ring as f64 * g.cell;
                if bd < bound * bound {
                    break;
                }
            }
        }
        best.map(|(_, i)| i as usize)
    }
}
