//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use explorebench_core::frontier::{MapCell, OccupancyMap};
use explorebench_core::memory::{EmbeddingProvider, MemoryBank, ObservationState, SimilarityWeights};
use explorebench_core::reward::ToolStatus;
use explorebench_core::scene::{Cell, CellState};
use explorebench_core::{Pose, Scene};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Quadratic DBSCAN: scan every pair for neighbourhoods, visit points in
/// row-major order, grow clusters breadth-first. Border points keep the
/// first cluster that reaches them.
pub fn naive_dbscan(points: &[Cell], eps: f64, min_pts: usize) -> Vec<Vec<Cell>> {
    let mut pts = points.to_vec();
    pts.sort();
    pts.dedup();
    let n = pts.len();
    let near = |i: usize, j: usize| {
        let dr = pts[i].0 as f64 - pts[j].0 as f64;
        let dc = pts[i].1 as f64 - pts[j].1 as f64;
        (dr * dr + dc * dc).sqrt() <= eps + 1e-12
    };
    let nbrs: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).collect()).collect();
    let core: Vec<bool> = nbrs.iter().map(|v| v.len() >= min_pts).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut out: Vec<Vec<Cell>> = vec![];
    for s in 0..n {
        if !core[s] || label[s].is_some() {
            continue;
        }
        let id = out.len();
        out.push(vec![]);
        let mut q = VecDeque::from([s]);
        label[s] = Some(id);
        while let Some(i) = q.pop_front() {
            out[id].push(pts[i]);
            if !core[i] {
                continue;
            }
            for &j in &nbrs[i] {
                if label[j].is_none() {
                    label[j] = Some(id);
                    q.push_back(j);
                }
            }
        }
        out[id].sort();
    }
    out
}

/// Explored free cells with at least one in-grid 4-neighbour that is
/// unexplored and not occupied.
pub fn naive_boundary(map: &OccupancyMap) -> Vec<Cell> {
    let (h, w) = (map.height(), map.width());
    let mut out = vec![];
    for r in 0..h {
        for c in 0..w {
            if !map.is_explored((r, c)) || map.cell((r, c)) != MapCell::Free {
                continue;
            }
            let mut nb = vec![];
            if r > 0 {
                nb.push((r - 1, c));
            }
            if r + 1 < h {
                nb.push((r + 1, c));
            }
            if c > 0 {
                nb.push((r, c - 1));
            }
            if c + 1 < w {
                nb.push((r, c + 1));
            }
            if nb.iter().any(|&n| !map.is_explored(n) && map.cell(n) != MapCell::Occupied) {
                out.push((r, c));
            }
        }
    }
    out
}

/// Random occupancy layer plus an explored layer built from a few
/// rectangles. Occupied cells are never explored-free.
pub fn random_map(rng: &mut ChaCha8Rng, size: usize) -> OccupancyMap {
    let mut cells = vec![MapCell::Unknown; size * size];
    let mut explored = vec![false; size * size];
    for _ in 0..rng.gen_range(1..6) {
        let (r0, c0) = (rng.gen_range(0..size), rng.gen_range(0..size));
        let (h, w) = (rng.gen_range(3..size / 2), rng.gen_range(3..size / 2));
        for r in r0..(r0 + h).min(size) {
            for c in c0..(c0 + w).min(size) {
                explored[r * size + c] = true;
            }
        }
    }
    let occ_p = rng.gen_range(0.0..0.08);
    for i in 0..size * size {
        if rng.gen_bool(occ_p) {
            cells[i] = MapCell::Occupied;
        } else if explored[i] {
            cells[i] = MapCell::Free;
        }
    }
    OccupancyMap::from_parts(size, size, 0.1, cells, explored)
}

pub fn open_scene(size: usize) -> Scene {
    Scene::new("open", size, size, 0.1, std::iter::empty(), vec![]).expect("open scene")
}

pub fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn random_obs(rng: &mut ChaCha8Rng, dim: usize) -> ObservationState {
    ObservationState {
        pose: Pose::new(rng.gen_range(0.0..16.0), rng.gen_range(0.0..16.0), 0.0),
        text_feat: unit_vec(rng, dim),
        obs_feat: unit_vec(rng, dim),
        caption: String::new(),
        tags: vec![],
    }
}

pub fn random_bank(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> MemoryBank {
    let mut bank = MemoryBank::new(SimilarityWeights::default());
    for i in 0..n {
        bank.force_goal_memory(&random_obs(rng, dim), i).expect("push");
    }
    bank
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exhaustive retrieval: score every entry by its better channel cosine,
/// sort descending with index ties ascending, keep `k`.
pub fn brute_retrieve(bank: &MemoryBank, query: &str, emb: &dyn EmbeddingProvider, k: usize) -> Vec<usize> {
    let q = emb.embed_text(query);
    let mut scored: Vec<(usize, f64)> = bank
        .entries()
        .iter()
        .map(|e| (e.index, dot(&q, &e.text_feat).max(dot(&q, &e.obs_feat))))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|p| p.0).collect()
}

/// Fine-step march along the segment; true when no sample lands in an
/// occupied or out-of-grid cell. The target's own cell is ignored.
pub fn ray_march_clear(scene: &Scene, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
    let cs = scene.cell_size();
    let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let n = (len / (cs / 20.0)).ceil().max(1.0) as usize;
    let target = scene.cell_of(x1, y1);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        match scene.cell_of(x, y) {
            None => return false,
            Some(c) if Some(c) == target => {}
            Some(c) => {
                if scene.state(c) == CellState::Occupied {
                    return false;
                }
            }
        }
    }
    true
}

/// Expected totals over (action, frontier, answer, format) correctness,
/// consistency coefficient and tool status, with the default weights
/// 0.2/0.2/0.4/0.2 and scaling 1.2 or 0.6/0.6/0.5/0.5. Computed with exact
/// rational arithmetic outside this crate, then rounded to f64.
pub const REWARD_TABLE: [([u8; 4], f64, ToolStatus, f64); 64] = [
    ([0, 0, 0, 0], 0.5, ToolStatus::Success, 0.0),
    ([0, 0, 0, 0], 0.5, ToolStatus::FailOrAbsent, 0.0),
    ([0, 0, 0, 0], 1.0, ToolStatus::Success, 0.0),
    ([0, 0, 0, 0], 1.0, ToolStatus::FailOrAbsent, 0.0),
    ([1, 0, 0, 0], 0.5, ToolStatus::Success, 0.12),
    ([1, 0, 0, 0], 0.5, ToolStatus::FailOrAbsent, 0.06),
    ([1, 0, 0, 0], 1.0, ToolStatus::Success, 0.24),
    ([1, 0, 0, 0], 1.0, ToolStatus::FailOrAbsent, 0.12),
    ([0, 1, 0, 0], 0.5, ToolStatus::Success, 0.12),
    ([0, 1, 0, 0], 0.5, ToolStatus::FailOrAbsent, 0.06),
    ([0, 1, 0, 0], 1.0, ToolStatus::Success, 0.24),
    ([0, 1, 0, 0], 1.0, ToolStatus::FailOrAbsent, 0.12),
    ([1, 1, 0, 0], 0.5, ToolStatus::Success, 0.24),
    ([1, 1, 0, 0], 0.5, ToolStatus::FailOrAbsent, 0.12),
    ([1, 1, 0, 0], 1.0, ToolStatus::Success, 0.48),
    ([1, 1, 0, 0], 1.0, ToolStatus::FailOrAbsent, 0.24),
    ([0, 0, 1, 0], 0.5, ToolStatus::Success, 0.48),
    ([0, 0, 1, 0], 0.5, ToolStatus::FailOrAbsent, 0.2),
    ([0, 0, 1, 0], 1.0, ToolStatus::Success, 0.48),
    ([0, 0, 1, 0], 1.0, ToolStatus::FailOrAbsent, 0.2),
    ([1, 0, 1, 0], 0.5, ToolStatus::Success, 0.6),
    ([1, 0, 1, 0], 0.5, ToolStatus::FailOrAbsent, 0.26),
    ([1, 0, 1, 0], 1.0, ToolStatus::Success, 0.72),
    ([1, 0, 1, 0], 1.0, ToolStatus::FailOrAbsent, 0.32),
    ([0, 1, 1, 0], 0.5, ToolStatus::Success, 0.6),
    ([0, 1, 1, 0], 0.5, ToolStatus::FailOrAbsent, 0.26),
    ([0, 1, 1, 0], 1.0, ToolStatus::Success, 0.72),
    ([0, 1, 1, 0], 1.0, ToolStatus::FailOrAbsent, 0.32),
    ([1, 1, 1, 0], 0.5, ToolStatus::Success, 0.72),
    ([1, 1, 1, 0], 0.5, ToolStatus::FailOrAbsent, 0.32),
    ([1, 1, 1, 0], 1.0, ToolStatus::Success, 0.96),
    ([1, 1, 1, 0], 1.0, ToolStatus::FailOrAbsent, 0.44),
    ([0, 0, 0, 1], 0.5, ToolStatus::Success, 0.24),
    ([0, 0, 0, 1], 0.5, ToolStatus::FailOrAbsent, 0.1),
    ([0, 0, 0, 1], 1.0, ToolStatus::Success, 0.24),
    ([0, 0, 0, 1], 1.0, ToolStatus::FailOrAbsent, 0.1),
    ([1, 0, 0, 1], 0.5, ToolStatus::Success, 0.36),
    ([1, 0, 0, 1], 0.5, ToolStatus::FailOrAbsent, 0.16),
    ([1, 0, 0, 1], 1.0, ToolStatus::Success, 0.48),
    ([1, 0, 0, 1], 1.0, ToolStatus::FailOrAbsent, 0.22),
    ([0, 1, 0, 1], 0.5, ToolStatus::Success, 0.36),
    ([0, 1, 0, 1], 0.5, ToolStatus::FailOrAbsent, 0.16),
    ([0, 1, 0, 1], 1.0, ToolStatus::Success, 0.48),
    ([0, 1, 0, 1], 1.0, ToolStatus::FailOrAbsent, 0.22),
    ([1, 1, 0, 1], 0.5, ToolStatus::Success, 0.48),
    ([1, 1, 0, 1], 0.5, ToolStatus::FailOrAbsent, 0.22),
    ([1, 1, 0, 1], 1.0, ToolStatus::Success, 0.72),
    ([1, 1, 0, 1], 1.0, ToolStatus::FailOrAbsent, 0.34),
    ([0, 0, 1, 1], 0.5, ToolStatus::Success, 0.72),
    ([0, 0, 1, 1], 0.5, ToolStatus::FailOrAbsent, 0.3),
    ([0, 0, 1, 1], 1.0, ToolStatus::Success, 0.72),
    ([0, 0, 1, 1], 1.0, ToolStatus::FailOrAbsent, 0.3),
    ([1, 0, 1, 1], 0.5, ToolStatus::Success, 0.84),
    ([1, 0, 1, 1], 0.5, ToolStatus::FailOrAbsent, 0.36),
    ([1, 0, 1, 1], 1.0, ToolStatus::Success, 0.96),
    ([1, 0, 1, 1], 1.0, ToolStatus::FailOrAbsent, 0.42),
    ([0, 1, 1, 1], 0.5, ToolStatus::Success, 0.84),
    ([0, 1, 1, 1], 0.5, ToolStatus::FailOrAbsent, 0.36),
    ([0, 1, 1, 1], 1.0, ToolStatus::Success, 0.96),
    ([0, 1, 1, 1], 1.0, ToolStatus::FailOrAbsent, 0.42),
    ([1, 1, 1, 1], 0.5, ToolStatus::Success, 0.96),
    ([1, 1, 1, 1], 0.5, ToolStatus::FailOrAbsent, 0.42),
    ([1, 1, 1, 1], 1.0, ToolStatus::Success, 1.0),
    ([1, 1, 1, 1], 1.0, ToolStatus::FailOrAbsent, 0.54),
];
