use std::collections::BTreeSet;

use crate::geometry::{MoveAction, Pose};
use crate::pathfinding::DistanceField;
use crate::reward::{parse_response, AgentResponse};
use crate::scene::{Cell, Scene};
use crate::sim::segment_is_free;

use super::random::RandomPolicy;
use super::{default_answer, FrontierInfo, Policy, PolicyError, RequestKind, StepRequest};

/// Turn when the waypoint is further off-axis than this.
const ALIGN_DEG: f64 = 15.0;
/// Waypoint distance along the grid path, in cells.
const LOOKAHEAD_CELLS: usize = 4;
/// A frontier counts as reached within this distance.
const REACHED_M: f64 = 0.5;

/// Walks to the goal when it is in view, otherwise to the nearest frontier
/// by geodesic distance. Falls back to random moves without frontiers.
pub struct GreedyFrontierPolicy {
    scene: Option<Scene>,
    target: Option<u32>,
    visited: BTreeSet<u32>,
    fallback: RandomPolicy,
    seed: u64,
}

impl GreedyFrontierPolicy {
    pub fn new(seed: u64) -> Self {
        GreedyFrontierPolicy {
            scene: None,
            target: None,
            visited: BTreeSet::new(),
            fallback: RandomPolicy::new(seed),
            seed,
        }
    }

    fn steer(scene: &Scene, pose: &Pose, field: &DistanceField, goal: Cell) -> Option<MoveAction> {
        let here = scene.cell_of(pose.x, pose.y)?;
        // path from here to the goal: distance field is rooted at the goal
        let path = field.path_to_source(here)?;
        let wp = path.get(LOOKAHEAD_CELLS.min(path.len() - 1)).copied()?;
        let (wx, wy) = scene.cell_center(wp);
        let b = if wp == here {
            let (gx, gy) = scene.cell_center(goal);
            pose.bearing_to(gx, gy)
        } else {
            pose.bearing_to(wx, wy)
        };
        let turn = if b > 0.0 { MoveAction::TurnRight } else { MoveAction::TurnLeft };
        if b.abs() > ALIGN_DEG {
            return Some(turn);
        }
        let (fx, fy) = pose.forward_target();
        if !segment_is_free(scene, pose, fx, fy) {
            return Some(turn);
        }
        Some(MoveAction::Forward)
    }

    fn pick_frontier<'a>(&mut self, scene: &Scene, pose: &Pose, frontiers: &'a [FrontierInfo]) -> Option<&'a FrontierInfo> {
        if let Some(t) = self.target {
            if let Some(f) = frontiers.iter().find(|f| f.id == t) {
                if f.distance > REACHED_M {
                    return Some(f);
                }
                self.visited.insert(t);
            }
            self.target = None;
        }
        let here = scene.cell_of(pose.x, pose.y)?;
        let field = DistanceField::compute(scene, here)?;
        let best = frontiers
            .iter()
            .filter(|f| !self.visited.contains(&f.id) && f.distance > REACHED_M)
            .filter_map(|f| {
                let cell = scene.cell_of(f.nav_point.x, f.nav_point.y)?;
                Some((field.distance(cell)?, f))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
            .map(|(_, f)| f);
        self.target = best.map(|f| f.id);
        best
    }
}

impl Policy for GreedyFrontierPolicy {
    fn name(&self) -> String {
        format!("greedy(seed={})", self.seed)
    }

    fn begin_episode(&mut self, scene: &Scene, task: &crate::task::Task) -> Result<(), PolicyError> {
        self.scene = Some(scene.clone());
        self.target = None;
        self.visited.clear();
        self.fallback.begin_episode(scene, task)
    }

    fn decide(&mut self, req: &StepRequest) -> Result<AgentResponse, PolicyError> {
        if req.kind == RequestKind::Qa {
            let q = req.question.as_ref().ok_or_else(|| PolicyError::Protocol("qa request without question".into()))?;
            return Ok(parse_response(&AgentResponse::render(None, None, Some(&default_answer(q)))));
        }
        let scene = self
            .scene
            .take()
            .ok_or_else(|| PolicyError::Protocol("decide called before begin_episode".into()))?;
        let resp = self.decide_nav(&scene, req);
        self.scene = Some(scene);
        resp
    }
}

impl GreedyFrontierPolicy {
    fn decide_nav(&mut self, scene: &Scene, req: &StepRequest) -> Result<AgentResponse, PolicyError> {
        let pose = req.pose;
        let goal_seen = req
            .views
            .iter()
            .flat_map(|v| v.visible.iter())
            .filter(|o| o.tag == req.subtask.goal_tag)
            .min_by(|a, b| a.distance.total_cmp(&b.distance));
        if let Some(obj) = goal_seen {
            let rad = (pose.heading + obj.bearing).to_radians();
            let (gx, gy) = (pose.x + obj.distance * rad.cos(), pose.y + obj.distance * rad.sin());
            if let Some(cell) = scene.cell_of(gx, gy) {
                if let Some(field) = DistanceField::compute(scene, cell) {
                    if let Some(a) = Self::steer(scene, &pose, &field, cell) {
                        return Ok(parse_response(&AgentResponse::render(Some(a), self.target, None)));
                    }
                }
            }
        }
        if let Some(f) = self.pick_frontier(scene, &pose, &req.frontiers) {
            let id = f.id;
            if let Some(cell) = scene.cell_of(f.nav_point.x, f.nav_point.y) {
                if let Some(field) = DistanceField::compute(scene, cell) {
                    if let Some(a) = Self::steer(scene, &pose, &field, cell) {
                        return Ok(parse_response(&AgentResponse::render(Some(a), Some(id), None)));
                    }
                }
            }
        }
        let a = self.fallback.next_action();
        Ok(parse_response(&AgentResponse::render(Some(a), None, None)))
    }
}
