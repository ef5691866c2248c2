//! Symbolic egocentric views.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_signed, Pose};
use crate::scene::{CellState, Scene};

use super::raycast::traverse;

/// Relative headings of the three views, degrees (negative = left).
pub const VIEW_HEADINGS: [f64; 3] = [-60.0, 0.0, 60.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewConfig {
    /// Horizontal field of view of each view, degrees.
    pub fov_deg: f64,
    /// Maximum sensing range, meters.
    pub range_m: f64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        ViewConfig {
            fov_deg: 60.0,
            range_m: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleObject {
    pub tag: String,
    pub distance: f64,
    /// Bearing relative to the agent heading (positive = right).
    pub bearing: f64,
    pub region: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub relative_heading: f64,
    pub visible: Vec<VisibleObject>,
}

impl View {
    pub fn side_name(&self) -> &'static str {
        if self.relative_heading < -1e-9 {
            "left"
        } else if self.relative_heading > 1e-9 {
            "right"
        } else {
            "center"
        }
    }
}

/// True when no occupied or out-of-grid cell lies on the segment.
pub fn line_of_sight(scene: &Scene, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
    let mut clear = true;
    traverse(x0, y0, x1, y1, scene.cell_size(), |r, c| {
        let outside = r < 0 || c < 0 || r as usize >= scene.height() || c as usize >= scene.width();
        if outside || scene.state((r as usize, c as usize)) == CellState::Occupied {
            clear = false;
        }
        clear
    });
    clear
}

fn sort_visible(v: &mut [VisibleObject]) {
    v.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.tag.cmp(&b.tag)));
}

fn sighting(scene: &Scene, pose: &Pose, cfg: &ViewConfig, idx: usize) -> Option<VisibleObject> {
    let obj = &scene.objects[idx];
    let distance = pose.distance_to(obj.x, obj.y);
    if distance > cfg.range_m {
        return None;
    }
    if !line_of_sight(scene, pose.x, pose.y, obj.x, obj.y) {
        return None;
    }
    let bearing = if distance == 0.0 {
        0.0
    } else {
        pose.bearing_to(obj.x, obj.y)
    };
    Some(VisibleObject {
        tag: obj.tag.clone(),
        distance,
        bearing,
        region: obj.region.clone(),
        color: obj.color.clone(),
        state: obj.state.clone(),
    })
}

/// Index into [`VIEW_HEADINGS`] of the view that sees `bearing`, if any.
/// Shared edges go to the view closer to straight ahead.
pub fn view_index_for_bearing(bearing: f64, fov_deg: f64) -> Option<usize> {
    let half = fov_deg / 2.0;
    let mut best: Option<(usize, f64)> = None;
    // center first so that ties resolve toward it
    for i in [1usize, 0, 2] {
        let off = wrap_signed(bearing - VIEW_HEADINGS[i]).abs();
        if off <= half && best.is_none_or(|(_, o)| off < o) {
            best = Some((i, off));
        }
    }
    best.map(|(i, _)| i)
}

/// Renders the left, center and right views at `pose`. Objects are listed by
/// `(distance, tag)`.
pub fn render_views(scene: &Scene, pose: &Pose, cfg: &ViewConfig) -> [View; 3] {
    let mut views = VIEW_HEADINGS.map(|h| View {
        relative_heading: h,
        visible: Vec::new(),
    });
    for idx in 0..scene.objects.len() {
        if let Some(s) = sighting(scene, pose, cfg, idx) {
            if let Some(v) = view_index_for_bearing(s.bearing, cfg.fov_deg) {
                views[v].visible.push(s);
            }
        }
    }
    for v in views.iter_mut() {
        sort_visible(&mut v.visible);
    }
    views
}

/// Single view centred on an absolute heading; used for frontier snapshots
/// and goal observations.
pub fn render_view_towards(scene: &Scene, pose: &Pose, heading: f64, cfg: &ViewConfig) -> View {
    let rel = wrap_signed(heading - pose.heading);
    let half = cfg.fov_deg / 2.0;
    let mut visible: Vec<VisibleObject> = (0..scene.objects.len())
        .filter_map(|i| sighting(scene, pose, cfg, i))
        .filter(|s| wrap_signed(s.bearing - rel).abs() <= half)
        .collect();
    sort_visible(&mut visible);
    View {
        relative_heading: rel,
        visible,
    }
}
