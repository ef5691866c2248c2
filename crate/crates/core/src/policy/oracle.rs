use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::OnceLock;

use regex::Regex;

use crate::geometry::{wrap_signed, MoveAction, Pose, FORWARD_STEP_M, TURN_STEP_DEG};
use crate::reward::{parse_response, AgentResponse};
use crate::scene::Scene;
use crate::sim::{apply_action, SUCCESS_RADIUS_M};
use crate::task::{AnswerFormat, QuestionType, Task};

use super::{default_answer, MemoryInfo, Policy, PolicyError, QuestionInfo, RequestKind, StepRequest};

const BIN_M: f64 = 0.05;
const FORWARD_COST: u64 = 64;
const TURN_COST: u64 = 1;
const MAX_EXPANSIONS: usize = 2_000_000;
/// Sightings closer than this are taken to be the same object.
const SAME_OBJECT_M: f64 = 0.3;

fn state_key(start: &Pose, p: &Pose) -> (i64, i64, u8) {
    let k = (wrap_signed(p.heading - start.heading) / TURN_STEP_DEG).round() as i64;
    (
        (p.x / BIN_M).round() as i64,
        (p.y / BIN_M).round() as i64,
        k.rem_euclid(12) as u8,
    )
}

/// Shortest action sequence (fewest forward moves, then fewest turns) that
/// brings `start` within `radius` of `(gx, gy)`, simulated with the real
/// action dynamics. `None` when no such sequence exists.
pub fn plan_actions(scene: &Scene, start: &Pose, gx: f64, gy: f64, radius: f64) -> Option<Vec<MoveAction>> {
    let h = |p: &Pose| -> u64 {
        let gap = p.distance_to(gx, gy) - radius;
        if gap <= 0.0 {
            0
        } else {
            ((gap / FORWARD_STEP_M) - 1e-9).ceil().max(0.0) as u64 * FORWARD_COST
        }
    };
    let mut nodes: Vec<(Pose, usize, MoveAction)> = vec![(*start, usize::MAX, MoveAction::Stop)];
    let mut best: HashMap<(i64, i64, u8), u64> = HashMap::new();
    best.insert(state_key(start, start), 0);
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((h(start), 0u64, 0usize)));
    let mut expansions = 0;
    while let Some(Reverse((_, g, id))) = heap.pop() {
        let pose = nodes[id].0;
        if best.get(&state_key(start, &pose)).is_some_and(|b| *b < g) {
            continue;
        }
        if pose.distance_to(gx, gy) <= radius {
            let mut actions = Vec::new();
            let mut cur = id;
            while nodes[cur].1 != usize::MAX {
                actions.push(nodes[cur].2);
                cur = nodes[cur].1;
            }
            actions.reverse();
            return Some(actions);
        }
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return None;
        }
        for action in [MoveAction::Forward, MoveAction::TurnLeft, MoveAction::TurnRight] {
            let (next, moved) = apply_action(scene, &pose, action);
            if action == MoveAction::Forward && !moved {
                continue;
            }
            let cost = g + if action == MoveAction::Forward { FORWARD_COST } else { TURN_COST };
            let key = state_key(start, &next);
            if best.get(&key).is_some_and(|b| *b <= cost) {
                continue;
            }
            best.insert(key, cost);
            nodes.push((next, id, action));
            heap.push(Reverse((cost + h(&next), cost, nodes.len() - 1)));
        }
    }
    None
}

fn count_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)how many (.+?) items").expect("valid regex"))
}

struct Sighting<'a> {
    tag: &'a str,
    x: f64,
    y: f64,
    region: &'a str,
    color: Option<&'a str>,
    state: Option<&'a str>,
}

fn sightings(memories: &[MemoryInfo]) -> Vec<Sighting<'_>> {
    let mut out = Vec::new();
    for m in memories {
        for o in &m.tags {
            let rad = (m.pose.heading + o.bearing).to_radians();
            out.push(Sighting {
                tag: &o.tag,
                x: m.pose.x + o.distance * rad.cos(),
                y: m.pose.y + o.distance * rad.sin(),
                region: &o.region,
                color: o.color.as_deref(),
                state: o.state.as_deref(),
            });
        }
    }
    out
}

/// Best-effort answer derived from retrieved memories.
pub(crate) fn answer_from_memories(q: &QuestionInfo, goal_tag: &str, memories: &[MemoryInfo]) -> Option<String> {
    let seen = sightings(memories);
    let goal = seen.iter().find(|s| s.tag == goal_tag)?;
    match q.qtype {
        QuestionType::Attribute => goal.color.map(str::to_string),
        QuestionType::State => goal.state.map(str::to_string),
        QuestionType::Location => Some(goal.region.to_string()),
        QuestionType::Relationship => seen
            .iter()
            .filter(|s| s.tag != goal_tag)
            .min_by(|a, b| {
                let da = (a.x - goal.x).hypot(a.y - goal.y);
                let db = (b.x - goal.x).hypot(b.y - goal.y);
                da.total_cmp(&db).then(a.tag.cmp(b.tag))
            })
            .map(|s| s.tag.to_string()),
        QuestionType::Counting => {
            let target = count_regex().captures(&q.question)?.get(1)?.as_str().to_string();
            let mut distinct: Vec<(f64, f64)> = Vec::new();
            for s in seen.iter().filter(|s| s.tag == target && s.region == goal.region) {
                if !distinct.iter().any(|(x, y)| (x - s.x).hypot(y - s.y) < SAME_OBJECT_M) {
                    distinct.push((s.x, s.y));
                }
            }
            Some(distinct.len().to_string())
        }
    }
}

fn pick_choice(q: &QuestionInfo, derived: Option<String>) -> String {
    match (&q.choices, derived) {
        (Some(choices), Some(d)) => choices
            .iter()
            .find(|c| c.trim().eq_ignore_ascii_case(d.trim()))
            .cloned()
            .unwrap_or_else(|| default_answer(q)),
        (Some(_), None) => default_answer(q),
        (None, Some(d)) => d,
        (None, None) => default_answer(q),
    }
}

/// Privileged baseline: plans on the true scene towards the true goal pose
/// and, in the QA phase, retrieves memories for the goal tag.
pub struct OraclePolicy {
    use_memory: bool,
    scene: Option<Scene>,
    task: Option<Task>,
    /// Expected pose and action for each remaining planned step.
    plan: Vec<(Pose, MoveAction)>,
    plan_subtask: Option<usize>,
}

impl Default for OraclePolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl OraclePolicy {
    pub fn new() -> Self {
        OraclePolicy {
            use_memory: true,
            scene: None,
            task: None,
            plan: Vec::new(),
            plan_subtask: None,
        }
    }

    /// Same navigation, but answers without consulting memory.
    pub fn without_memory() -> Self {
        OraclePolicy {
            use_memory: false,
            ..Self::new()
        }
    }

    fn replan(&mut self, scene: &Scene, pose: &Pose, subtask: usize, goal: &Pose) {
        self.plan.clear();
        self.plan_subtask = Some(subtask);
        if let Some(actions) = plan_actions(scene, pose, goal.x, goal.y, SUCCESS_RADIUS_M) {
            let mut p = *pose;
            for a in actions {
                self.plan.push((p, a));
                p = apply_action(scene, &p, a).0;
            }
            self.plan.reverse();
        }
    }

    fn navigate(&mut self, req: &StepRequest) -> Result<AgentResponse, PolicyError> {
        let (Some(scene), Some(task)) = (self.scene.take(), self.task.as_ref()) else {
            return Err(PolicyError::Protocol("decide called before begin_episode".into()));
        };
        let k = req.subtask.index;
        let goal = task
            .subtasks
            .get(k)
            .map(|s| s.goal_pose)
            .ok_or_else(|| PolicyError::Protocol(format!("unknown subtask {k}")))?;
        let on_plan = self.plan_subtask == Some(k) && self.plan.last().is_some_and(|(p, _)| *p == req.pose);
        if !on_plan {
            self.replan(&scene, &req.pose, k, &goal);
        }
        self.scene = Some(scene);
        let action = self.plan.pop().map_or(MoveAction::Stop, |(_, a)| a);
        Ok(parse_response(&AgentResponse::render(Some(action), None, None)))
    }

    fn answer(&mut self, req: &StepRequest) -> Result<AgentResponse, PolicyError> {
        let q = req
            .question
            .as_ref()
            .ok_or_else(|| PolicyError::Protocol("qa request without question".into()))?;
        let goal_tag = req.subtask.goal_tag.clone();
        if !self.use_memory {
            return Ok(parse_response(&AgentResponse::render(None, None, Some(&default_answer(q)))));
        }
        if !req.is_second_round() {
            return Ok(parse_response(&AgentResponse::tool_call_text(&goal_tag)));
        }
        let derived = req
            .memories
            .as_deref()
            .and_then(|m| answer_from_memories(q, &goal_tag, m));
        let text = match q.format {
            AnswerFormat::Choice => pick_choice(q, derived),
            AnswerFormat::OpenEnded => derived.unwrap_or_else(|| default_answer(q)),
        };
        Ok(parse_response(&AgentResponse::render(None, None, Some(&text))))
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> String {
        if self.use_memory {
            "oracle".into()
        } else {
            "oracle-no-memory".into()
        }
    }

    fn begin_episode(&mut self, scene: &Scene, task: &Task) -> Result<(), PolicyError> {
        self.scene = Some(scene.clone());
        self.task = Some(task.clone());
        self.plan.clear();
        self.plan_subtask = None;
        Ok(())
    }

    fn decide(&mut self, req: &StepRequest) -> Result<AgentResponse, PolicyError> {
        match req.kind {
            RequestKind::Step => self.navigate(req),
            RequestKind::Qa => self.answer(req),
        }
    }
}
