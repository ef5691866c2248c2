//! Frontier clusters: filtering, wide-cluster splitting and identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_heading, Pose};
use crate::scene::{Cell, Scene};
use crate::sim::{render_view_towards, View, ViewConfig};

use super::dbscan::{dbscan, DbscanParams};
use super::occupancy::OccupancyMap;

const KMEANS_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierConfig {
    pub dbscan: DbscanParams,
    /// Clusters smaller than this are dropped.
    pub min_cells: usize,
    /// Clusters whose bearing extent exceeds this are split in two.
    pub split_extent_deg: f64,
    /// Minimum IoU for a cluster to inherit a previous frontier's identity.
    pub iou_keep: f64,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        FrontierConfig {
            dbscan: DbscanParams::default(),
            min_cells: 20,
            split_extent_deg: 150.0,
            iou_keep: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub id: u32,
    pub cells: Vec<Cell>,
    pub nav_point: Pose,
    pub snapshot: View,
    pub bearing_extent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierSummary {
    pub id: u32,
    pub cell_count: usize,
    pub nav_point: Pose,
    pub bearing_extent: f64,
}

impl Frontier {
    pub fn summary(&self) -> FrontierSummary {
        FrontierSummary {
            id: self.id,
            cell_count: self.cells.len(),
            nav_point: self.nav_point,
            bearing_extent: self.bearing_extent,
        }
    }
}

fn center((r, c): Cell, cell_size: f64) -> (f64, f64) {
    ((c as f64 + 0.5) * cell_size, (r as f64 + 0.5) * cell_size)
}

fn absolute_bearing(pose: &Pose, cell: Cell, cell_size: f64) -> f64 {
    let (x, y) = center(cell, cell_size);
    normalize_heading((y - pose.y).atan2(x - pose.x).to_degrees())
}

/// Start of the arc covering all bearings (the angle just after the largest
/// gap) and its width, both in degrees.
fn arc(bearings: &[f64]) -> (f64, f64) {
    if bearings.len() < 2 {
        return (bearings.first().copied().unwrap_or(0.0), 0.0);
    }
    let mut sorted = bearings.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut best_gap = sorted[0] + 360.0 - sorted[n - 1];
    let mut start = sorted[0];
    for i in 1..n {
        let gap = sorted[i] - sorted[i - 1];
        if gap > best_gap {
            best_gap = gap;
            start = sorted[i];
        }
    }
    (start, 360.0 - best_gap)
}

/// Angular width of the smallest arc, seen from `pose`, containing every cell.
pub fn angular_extent(cells: &[Cell], pose: &Pose, cell_size: f64) -> f64 {
    let b: Vec<f64> = cells.iter().map(|c| absolute_bearing(pose, *c, cell_size)).collect();
    arc(&b).1
}

/// Splits a wide cluster by 2-means on bearing. The centroids start at the
/// two ends of the covering arc.
pub fn split_wide(
    cells: &[Cell],
    pose: &Pose,
    cell_size: f64,
    threshold_deg: f64,
) -> Result<[Vec<Cell>; 2]> {
    let bearings: Vec<f64> = cells.iter().map(|c| absolute_bearing(pose, *c, cell_size)).collect();
    let (start, extent) = arc(&bearings);
    if extent <= threshold_deg {
        return Err(Error::Contract(format!(
            "split_wide needs an extent above {threshold_deg} deg, got {extent:.3}"
        )));
    }
    // unwrap onto [0, extent]
    let t: Vec<f64> = bearings.iter().map(|b| (b - start).rem_euclid(360.0)).collect();
    let mut cent = [0.0, extent];
    let mut assign = vec![0usize; t.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, v) in t.iter().enumerate() {
            let k = if (v - cent[1]).abs() < (v - cent[0]).abs() { 1 } else { 0 };
            if assign[i] != k {
                assign[i] = k;
                changed = true;
            }
        }
        let mut sum = [0.0; 2];
        let mut cnt = [0usize; 2];
        for (i, v) in t.iter().enumerate() {
            sum[assign[i]] += v;
            cnt[assign[i]] += 1;
        }
        if cnt[0] == 0 || cnt[1] == 0 {
            break;
        }
        let next = [sum[0] / cnt[0] as f64, sum[1] / cnt[1] as f64];
        if !changed && next == cent {
            break;
        }
        cent = next;
    }
    let mut parts = [Vec::new(), Vec::new()];
    if assign.iter().all(|a| *a == assign[0]) {
        // degenerate: fall back to a median split along the arc
        let mut order: Vec<usize> = (0..t.len()).collect();
        order.sort_by(|a, b| t[*a].total_cmp(&t[*b]).then(a.cmp(b)));
        let half = order.len() / 2;
        for (rank, i) in order.into_iter().enumerate() {
            parts[usize::from(rank >= half)].push(cells[i]);
        }
    } else {
        for (i, c) in cells.iter().enumerate() {
            parts[assign[i]].push(*c);
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    Ok(parts)
}

/// IoU of two row-major sorted cell lists.
pub fn cell_iou(a: &[Cell], b: &[Cell]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Boundary cells clustered and size-filtered, without splitting.
pub fn cluster_boundary(map: &OccupancyMap, cfg: &FrontierConfig) -> Vec<Vec<Cell>> {
    dbscan(&map.boundary_cells(), &cfg.dbscan)
        .into_iter()
        .filter(|c| c.len() >= cfg.min_cells)
        .collect()
}

fn split_recursive(cells: Vec<Cell>, pose: &Pose, cell_size: f64, cfg: &FrontierConfig, out: &mut Vec<Vec<Cell>>) {
    if angular_extent(&cells, pose, cell_size) > cfg.split_extent_deg {
        if let Ok([a, b]) = split_wide(&cells, pose, cell_size, cfg.split_extent_deg) {
            if a.len() >= cfg.min_cells && b.len() >= cfg.min_cells {
                split_recursive(a, pose, cell_size, cfg, out);
                split_recursive(b, pose, cell_size, cfg, out);
                return;
            }
        }
    }
    out.push(cells);
}

/// Cluster cell nearest the centroid (ties by row-major order).
fn nav_cell(cells: &[Cell]) -> Cell {
    let n = cells.len() as f64;
    let mr = cells.iter().map(|c| c.0 as f64).sum::<f64>() / n;
    let mc = cells.iter().map(|c| c.1 as f64).sum::<f64>() / n;
    *cells
        .iter()
        .min_by(|a, b| {
            let da = (a.0 as f64 - mr).powi(2) + (a.1 as f64 - mc).powi(2);
            let db = (b.0 as f64 - mr).powi(2) + (b.1 as f64 - mc).powi(2);
            da.total_cmp(&db).then(a.cmp(b))
        })
        .expect("non-empty cluster")
}

/// Extracts frontiers from the current map. Clusters overlapping a previous
/// frontier with IoU at or above the threshold keep its id and snapshot;
/// others draw fresh ids from `next_id`. Output is sorted by id.
pub fn extract_frontiers(
    map: &OccupancyMap,
    scene: &Scene,
    pose: &Pose,
    prev: &[Frontier],
    next_id: &mut u32,
    cfg: &FrontierConfig,
    view_cfg: &ViewConfig,
) -> Vec<Frontier> {
    let cs = map.cell_size();
    let mut clusters = Vec::new();
    for c in cluster_boundary(map, cfg) {
        split_recursive(c, pose, cs, cfg, &mut clusters);
    }

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, c) in clusters.iter().enumerate() {
        for (j, p) in prev.iter().enumerate() {
            let iou = cell_iou(c, &p.cells);
            if iou >= cfg.iou_keep {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut matched: Vec<Option<usize>> = vec![None; clusters.len()];
    let mut used = vec![false; prev.len()];
    for (_, i, j) in pairs {
        if matched[i].is_none() && !used[j] {
            matched[i] = Some(j);
            used[j] = true;
        }
    }

    let mut out: Vec<Frontier> = clusters
        .into_iter()
        .zip(matched)
        .map(|(cells, m)| {
            let (nx, ny) = center(nav_cell(&cells), cs);
            let nav_point = Pose::new(nx, ny, pose.heading_towards(nx, ny));
            let bearing_extent = angular_extent(&cells, pose, cs);
            let (id, snapshot) = match m {
                Some(j) => (prev[j].id, prev[j].snapshot.clone()),
                None => {
                    let id = *next_id;
                    *next_id += 1;
                    (id, render_view_towards(scene, pose, nav_point.heading, view_cfg))
                }
            };
            Frontier {
                id,
                cells,
                nav_point,
                snapshot,
                bearing_extent,
            }
        })
        .collect();
    out.sort_by_key(|f| f.id);
    out
}

/// Stateful wrapper that keeps the previous frontier set and id counter.
#[derive(Debug, Clone, Default)]
pub struct FrontierExtractor {
    pub cfg: FrontierConfig,
    next_id: u32,
    current: Vec<Frontier>,
}

impl FrontierExtractor {
    pub fn new(cfg: FrontierConfig) -> Self {
        FrontierExtractor {
            cfg,
            next_id: 0,
            current: Vec::new(),
        }
    }

    pub fn update(&mut self, map: &OccupancyMap, scene: &Scene, pose: &Pose, view_cfg: &ViewConfig) -> &[Frontier] {
        let next = extract_frontiers(map, scene, pose, &self.current, &mut self.next_id, &self.cfg, view_cfg);
        self.current = next;
        &self.current
    }

    pub fn frontiers(&self) -> &[Frontier] {
        &self.current
    }
}
