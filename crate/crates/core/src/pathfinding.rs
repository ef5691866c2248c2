//! 8-connected grid geodesics.
//!
//! Straight moves cost one cell, diagonal moves √2 cells, and a diagonal is
//! only allowed when both orthogonal neighbours are free (no corner cutting).
//! Path costs are tracked as `(straight, diagonal)` move counts so that the
//! length of a given path is computed identically regardless of direction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::scene::{Cell, Scene};

const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cost {
    straight: u32,
    diagonal: u32,
}

impl Cost {
    const ZERO: Cost = Cost {
        straight: 0,
        diagonal: 0,
    };

    fn cells(self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }
}

#[derive(PartialEq)]
struct Entry {
    cost: f64,
    index: usize,
    counts: Cost,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, then index for determinism
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest distances over the free cells of a scene.
#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    cell_size: f64,
    counts: Vec<Option<Cost>>,
    parent: Vec<usize>,
    source: Cell,
}

impl DistanceField {
    /// Runs Dijkstra from `source`. Returns `None` if the source is not free.
    pub fn compute(scene: &Scene, source: Cell) -> Option<DistanceField> {
        if !scene.is_free_cell(source) {
            return None;
        }
        let (w, h) = (scene.width(), scene.height());
        let mut counts: Vec<Option<Cost>> = vec![None; w * h];
        let mut parent = vec![usize::MAX; w * h];
        let mut settled = vec![false; w * h];
        let src = source.0 * w + source.1;
        counts[src] = Some(Cost::ZERO);
        let mut heap = BinaryHeap::new();
        heap.push(Entry {
            cost: 0.0,
            index: src,
            counts: Cost::ZERO,
        });
        while let Some(Entry { index, counts: c, .. }) = heap.pop() {
            if settled[index] {
                continue;
            }
            settled[index] = true;
            let (r, col) = (index / w, index % w);
            for (dr, dc) in NEIGHBOURS {
                let Some(next) = step(scene, (r, col), dr, dc) else {
                    continue;
                };
                let ni = next.0 * w + next.1;
                if settled[ni] {
                    continue;
                }
                let nc = if dr != 0 && dc != 0 {
                    Cost {
                        straight: c.straight,
                        diagonal: c.diagonal + 1,
                    }
                } else {
                    Cost {
                        straight: c.straight + 1,
                        diagonal: c.diagonal,
                    }
                };
                let better = match counts[ni] {
                    None => true,
                    Some(old) => nc.cells() < old.cells(),
                };
                if better {
                    counts[ni] = Some(nc);
                    parent[ni] = index;
                    heap.push(Entry {
                        cost: nc.cells(),
                        index: ni,
                        counts: nc,
                    });
                }
            }
        }
        Some(DistanceField {
            width: w,
            cell_size: scene.cell_size(),
            counts,
            parent,
            source,
        })
    }

    pub fn source(&self) -> Cell {
        self.source
    }

    /// Geodesic distance in meters, `None` when unreachable.
    pub fn distance(&self, cell: Cell) -> Option<f64> {
        self.counts
            .get(cell.0 * self.width + cell.1)
            .copied()
            .flatten()
            .map(|c| c.cells() * self.cell_size)
    }

    /// Cells from `cell` back to the source (inclusive on both ends).
    pub fn path_to_source(&self, cell: Cell) -> Option<Vec<Cell>> {
        let mut idx = cell.0 * self.width + cell.1;
        self.counts.get(idx).copied().flatten()?;
        let src = self.source.0 * self.width + self.source.1;
        let mut path = vec![cell];
        while idx != src {
            idx = self.parent[idx];
            path.push((idx / self.width, idx % self.width));
        }
        Some(path)
    }
}

fn step(scene: &Scene, from: Cell, dr: isize, dc: isize) -> Option<Cell> {
    let r = from.0.checked_add_signed(dr)?;
    let c = from.1.checked_add_signed(dc)?;
    if !scene.is_free_cell((r, c)) {
        return None;
    }
    if dr != 0 && dc != 0 && !(scene.is_free_cell((from.0, c)) && scene.is_free_cell((r, from.1)))
    {
        return None;
    }
    Some((r, c))
}

/// Length of the shortest 8-connected path between the cells holding `a`
/// and `b`, in meters.
pub fn geodesic_distance(scene: &Scene, a: &Pose, b: &Pose) -> Result<f64> {
    let ca = free_cell(scene, a)?;
    let cb = free_cell(scene, b)?;
    if ca == cb {
        return Ok(0.0);
    }
    let field = DistanceField::compute(scene, ca).expect("source checked free");
    field.distance(cb).ok_or_else(|| Error::Unreachable {
        goal: format!("({:.2}, {:.2})", b.x, b.y),
    })
}

/// Shortest cell path from `a` to `b` (inclusive), if one exists.
pub fn shortest_path(scene: &Scene, a: Cell, b: Cell) -> Option<Vec<Cell>> {
    let field = DistanceField::compute(scene, b)?;
    field.path_to_source(a)
}

fn free_cell(scene: &Scene, p: &Pose) -> Result<Cell> {
    scene
        .cell_of(p.x, p.y)
        .filter(|c| scene.is_free_cell(*c))
        .ok_or_else(|| Error::Contract(format!("pose ({:.2}, {:.2}) is not on a free cell", p.x, p.y)))
}
