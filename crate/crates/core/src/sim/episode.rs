//! Action dynamics and per-episode state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MoveAction, Pose, FORWARD_STEP_M, TURN_STEP_DEG};
use crate::scene::Scene;
use crate::task::Subtask;

use super::raycast::traverse;
use crate::scene::CellState;

/// Success radius around a goal, meters (inclusive).
pub const SUCCESS_RADIUS_M: f64 = 1.0;

/// True when the straight move from `from` to `(x, y)` stays on free cells.
pub fn segment_is_free(scene: &Scene, from: &Pose, x: f64, y: f64) -> bool {
    if scene.cell_of(x, y).is_none() {
        return false;
    }
    let mut free = true;
    traverse(from.x, from.y, x, y, scene.cell_size(), |r, c| {
        free = r >= 0
            && c >= 0
            && (r as usize) < scene.height()
            && (c as usize) < scene.width()
            && scene.state((r as usize, c as usize)) == CellState::Free;
        free
    });
    free
}

/// Pose after `action`, plus whether a forward move actually happened.
/// A blocked forward leaves the pose unchanged.
pub fn apply_action(scene: &Scene, pose: &Pose, action: MoveAction) -> (Pose, bool) {
    match action {
        MoveAction::Forward => {
            let (x, y) = pose.forward_target();
            if segment_is_free(scene, pose, x, y) {
                (
                    Pose {
                        x,
                        y,
                        heading: pose.heading,
                    },
                    true,
                )
            } else {
                (*pose, false)
            }
        }
        MoveAction::TurnLeft => (Pose::new(pose.x, pose.y, pose.heading - TURN_STEP_DEG), false),
        MoveAction::TurnRight => (Pose::new(pose.x, pose.y, pose.heading + TURN_STEP_DEG), false),
        MoveAction::Stop => (*pose, false),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub pose: Pose,
    /// Steps taken over the whole episode.
    pub step: usize,
    pub subtask_index: usize,
    /// Steps taken in the current subtask.
    pub subtask_steps: usize,
    /// Pose each action was taken from, with the action.
    pub trajectory: Vec<(Pose, MoveAction)>,
    /// Set by `Stop`; cleared when the next subtask begins.
    pub subtask_stopped: bool,
    /// Meters actually travelled in the current subtask.
    pub subtask_path_m: f64,
    pub done: bool,
}

impl EpisodeState {
    pub fn new(start: Pose) -> Self {
        EpisodeState {
            pose: start,
            step: 0,
            subtask_index: 0,
            subtask_steps: 0,
            trajectory: Vec::new(),
            subtask_stopped: false,
            subtask_path_m: 0.0,
            done: false,
        }
    }

    /// In-place version of [`step`]. Returns whether the agent moved.
    pub fn advance(&mut self, scene: &Scene, action: MoveAction) -> Result<bool> {
        if self.done {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        if self.subtask_stopped {
            return Err(Error::Contract("step called after Stop without a new subtask".into()));
        }
        let (next, moved) = apply_action(scene, &self.pose, action);
        self.trajectory.push((self.pose, action));
        self.pose = next;
        self.step += 1;
        self.subtask_steps += 1;
        if moved {
            self.subtask_path_m += FORWARD_STEP_M;
        }
        if action == MoveAction::Stop {
            self.subtask_stopped = true;
        }
        Ok(moved)
    }

    pub fn begin_subtask(&mut self, index: usize) {
        self.subtask_index = index;
        self.subtask_steps = 0;
        self.subtask_stopped = false;
        self.subtask_path_m = 0.0;
    }
}

/// Applies one action to a copy of `state`.
pub fn step(scene: &Scene, state: &EpisodeState, action: MoveAction) -> Result<EpisodeState> {
    let mut next = state.clone();
    next.advance(scene, action)?;
    Ok(next)
}

pub fn check_success(pose: &Pose, goal: &Subtask) -> bool {
    pose.distance(&goal.goal_pose) <= SUCCESS_RADIUS_M
}
