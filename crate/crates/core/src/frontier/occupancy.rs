use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::scene::{Cell, CellState, Scene};
use crate::sim::raycast::traverse;
use crate::sim::{ViewConfig, VIEW_HEADINGS};

/// Cells observed within this distance of a trajectory pose become explored.
pub const EXPLORE_RADIUS_M: f64 = 1.7;
const RAY_STEP_DEG: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapCell {
    Unknown,
    Free,
    Occupied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMap {
    width: usize,
    height: usize,
    cell_size: f64,
    cells: Vec<MapCell>,
    explored: Vec<bool>,
    pub explore_radius_m: f64,
}

impl OccupancyMap {
    pub fn new(width: usize, height: usize, cell_size: f64) -> Self {
        OccupancyMap {
            width,
            height,
            cell_size,
            cells: vec![MapCell::Unknown; width * height],
            explored: vec![false; width * height],
            explore_radius_m: EXPLORE_RADIUS_M,
        }
    }

    pub fn for_scene(scene: &Scene) -> Self {
        Self::new(scene.width(), scene.height(), scene.cell_size())
    }

    /// Builds a map from explicit layers. Explored cells that are `Unknown`
    /// are treated as `Free`.
    pub fn from_parts(
        width: usize,
        height: usize,
        cell_size: f64,
        mut cells: Vec<MapCell>,
        explored: Vec<bool>,
    ) -> Self {
        assert_eq!(cells.len(), width * height, "cell layer size");
        assert_eq!(explored.len(), width * height, "explored layer size");
        for (c, e) in cells.iter_mut().zip(&explored) {
            if *e && *c == MapCell::Unknown {
                *c = MapCell::Free;
            }
        }
        OccupancyMap {
            width,
            height,
            cell_size,
            cells,
            explored,
            explore_radius_m: EXPLORE_RADIUS_M,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    fn idx(&self, (r, c): Cell) -> usize {
        r * self.width + c
    }

    pub fn cell(&self, cell: Cell) -> MapCell {
        self.cells[self.idx(cell)]
    }

    pub fn is_explored(&self, cell: Cell) -> bool {
        self.explored[self.idx(cell)]
    }

    pub fn explored_count(&self) -> usize {
        self.explored.iter().filter(|e| **e).count()
    }

    pub fn explored_mask(&self) -> &[bool] {
        &self.explored
    }

    pub fn cell_center(&self, (r, c): Cell) -> (f64, f64) {
        ((c as f64 + 0.5) * self.cell_size, (r as f64 + 0.5) * self.cell_size)
    }

    fn in_bounds(&self, r: isize, c: isize) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width
    }

    /// Cells seen from `pose` by the three views, stopping each ray at the
    /// first occupied cell.
    pub fn observe(&self, scene: &Scene, pose: &Pose, cfg: &ViewConfig) -> Vec<(Cell, MapCell)> {
        let mut seen = vec![false; self.width * self.height];
        let mut out = Vec::new();
        let half = cfg.fov_deg / 2.0;
        let rays = (cfg.fov_deg / RAY_STEP_DEG).round() as usize;
        for rel in VIEW_HEADINGS {
            for k in 0..=rays {
                let angle = (pose.heading + rel - half + k as f64 * RAY_STEP_DEG).to_radians();
                let x1 = pose.x + cfg.range_m * angle.cos();
                let y1 = pose.y + cfg.range_m * angle.sin();
                traverse(pose.x, pose.y, x1, y1, self.cell_size, |r, c| {
                    if !self.in_bounds(r, c) {
                        return false;
                    }
                    let cell = (r as usize, c as usize);
                    let occupied = scene.state(cell) == CellState::Occupied;
                    let i = self.idx(cell);
                    if !seen[i] {
                        seen[i] = true;
                        out.push((cell, if occupied { MapCell::Occupied } else { MapCell::Free }));
                    }
                    !occupied
                });
            }
        }
        out.sort_by_key(|(c, _)| *c);
        out
    }

    /// Integrates one observation. Returns the number of newly explored cells.
    pub fn update(&mut self, scene: &Scene, pose: &Pose, cfg: &ViewConfig) -> usize {
        let mut added = 0;
        for (cell, state) in self.observe(scene, pose, cfg) {
            let i = self.idx(cell);
            self.cells[i] = state;
            let (cx, cy) = self.cell_center(cell);
            if !self.explored[i] && pose.distance_to(cx, cy) <= self.explore_radius_m {
                self.explored[i] = true;
                added += 1;
            }
        }
        added
    }

    /// Explored free cells with a 4-neighbour that is neither explored nor
    /// known to be occupied. Row-major order.
    pub fn boundary_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = (r, c);
                if !self.is_explored(cell) || self.cell(cell) != MapCell::Free {
                    continue;
                }
                let open = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)].iter().any(|(dr, dc)| {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if !self.in_bounds(nr, nc) {
                        return false;
                    }
                    let n = (nr as usize, nc as usize);
                    !self.is_explored(n) && self.cell(n) != MapCell::Occupied
                });
                if open {
                    out.push(cell);
                }
            }
        }
        out
    }
}
