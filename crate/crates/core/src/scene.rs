//! 2-D occupancy scenes with tagged objects.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

pub const DEFAULT_CELL_SIZE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Free,
    Occupied,
}

/// Grid coordinate as `(row, col)`.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub tag: String,
    pub x: f64,
    pub y: f64,
    pub region: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
}

impl SceneObject {
    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, 0.0)
    }
}

/// On-disk layout of a scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SceneFile {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    id: String,
    cell_size: f64,
    width: usize,
    height: usize,
    occupied: Vec<[usize; 2]>,
    objects: Vec<SceneObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    width: usize,
    height: usize,
    cell_size: f64,
    cells: Vec<CellState>,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    /// Builds and validates a scene. `occupied` lists `(row, col)` cells.
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        cell_size: f64,
        occupied: impl IntoIterator<Item = Cell>,
        objects: Vec<SceneObject>,
    ) -> Result<Scene> {
        if width == 0 {
            return Err(invalid("width", "must be at least 1"));
        }
        if height == 0 {
            return Err(invalid("height", "must be at least 1"));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(invalid("cell_size", format!("must be > 0, got {cell_size}")));
        }
        let mut cells = vec![CellState::Free; width * height];
        for (i, (r, c)) in occupied.into_iter().enumerate() {
            if r >= height || c >= width {
                return Err(invalid(
                    format!("occupied[{i}]"),
                    format!("cell ({r}, {c}) outside {height}x{width} grid"),
                ));
            }
            cells[r * width + c] = CellState::Occupied;
        }
        let scene = Scene {
            id: id.into(),
            width,
            height,
            cell_size,
            cells,
            objects,
        };
        scene.validate()?;
        Ok(scene)
    }

    fn validate(&self) -> Result<()> {
        if !self.cells.contains(&CellState::Free) {
            return Err(invalid("occupied", "scene has no free cell"));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.tag.trim().is_empty() {
                return Err(invalid(format!("objects[{i}].tag"), "empty tag"));
            }
            if !self.is_free_point(obj.x, obj.y) {
                return Err(invalid(
                    format!("objects[{i}]"),
                    format!(
                        "object `{}` at ({}, {}) is not on a free cell",
                        obj.tag, obj.x, obj.y
                    ),
                ));
            }
        }
        Ok(())
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

    pub fn extent_m(&self) -> (f64, f64) {
        (
            self.width as f64 * self.cell_size,
            self.height as f64 * self.cell_size,
        )
    }

    pub fn state(&self, cell: Cell) -> CellState {
        self.cells[cell.0 * self.width + cell.1]
    }

    pub fn is_free_cell(&self, cell: Cell) -> bool {
        cell.0 < self.height && cell.1 < self.width && self.state(cell) == CellState::Free
    }

    /// Cell containing a world point, or `None` outside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return None;
        }
        let c = (x / self.cell_size).floor() as usize;
        let r = (y / self.cell_size).floor() as usize;
        (r < self.height && c < self.width).then_some((r, c))
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some_and(|c| self.is_free_cell(c))
    }

    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        (
            (cell.1 as f64 + 0.5) * self.cell_size,
            (cell.0 as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == CellState::Occupied)
            .map(move |(i, _)| (i / self.width, i % self.width))
    }

    pub fn free_cell_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == CellState::Free).count()
    }

    pub fn object(&self, tag: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.tag == tag)
    }

    pub fn to_json(&self) -> String {
        let file = SceneFile {
            id: self.id.clone(),
            cell_size: self.cell_size,
            width: self.width,
            height: self.height,
            occupied: self.occupied_cells().map(|(r, c)| [r, c]).collect(),
            objects: self.objects.clone(),
        };
        serde_json::to_string(&file).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Scene> {
        let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::json("scene", e))?;
        Scene::new(
            file.id,
            file.width,
            file.height,
            file.cell_size,
            file.occupied.into_iter().map(|[r, c]| (r, c)),
            file.objects,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Reads and validates a scene file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Scene::from_json(&text)
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidScene {
        field: field.into(),
        reason: reason.into(),
    }
}
