//! Density clustering of grid cells.

use serde::{Deserialize, Serialize};

use crate::scene::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    /// Neighbourhood radius in cells (inclusive).
    pub eps_cells: u32,
    /// Minimum neighbourhood size, counting the point itself.
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            eps_cells: 2,
            min_pts: 4,
        }
    }
}

/// Clusters `points` (any order, duplicates ignored).
///
/// Clusters are numbered in row-major order of their first core point; a
/// border point reachable from several clusters joins the earliest one.
/// Noise is dropped. Each returned cluster is sorted row-major.
pub fn dbscan(points: &[Cell], params: &DbscanParams) -> Vec<Vec<Cell>> {
    let mut pts: Vec<Cell> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.is_empty() {
        return Vec::new();
    }
    let max_r = pts.iter().map(|p| p.0).max().unwrap_or(0);
    let max_c = pts.iter().map(|p| p.1).max().unwrap_or(0);
    let (h, w) = (max_r + 1, max_c + 1);
    const NONE: usize = usize::MAX;
    let mut slot = vec![NONE; h * w];
    for (i, p) in pts.iter().enumerate() {
        slot[p.0 * w + p.1] = i;
    }

    let eps = params.eps_cells as isize;
    let eps2 = eps * eps;
    let offsets: Vec<(isize, isize)> = (-eps..=eps)
        .flat_map(|dr| (-eps..=eps).map(move |dc| (dr, dc)))
        .filter(|(dr, dc)| dr * dr + dc * dc <= eps2)
        .collect();
    let neighbours = |i: usize| -> Vec<usize> {
        let (r, c) = (pts[i].0 as isize, pts[i].1 as isize);
        offsets
            .iter()
            .filter_map(|(dr, dc)| {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w {
                    return None;
                }
                let s = slot[nr as usize * w + nc as usize];
                (s != NONE).then_some(s)
            })
            .collect()
    };
    let core: Vec<bool> = (0..pts.len())
        .map(|i| neighbours(i).len() >= params.min_pts)
        .collect();

    let mut label = vec![NONE; pts.len()];
    let mut clusters: Vec<Vec<Cell>> = Vec::new();
    for seed in 0..pts.len() {
        if !core[seed] || label[seed] != NONE {
            continue;
        }
        let id = clusters.len();
        let mut members = Vec::new();
        let mut stack = vec![seed];
        label[seed] = id;
        while let Some(i) = stack.pop() {
            members.push(pts[i]);
            if !core[i] {
                continue;
            }
            for n in neighbours(i) {
                if label[n] == NONE {
                    label[n] = id;
                    stack.push(n);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}
