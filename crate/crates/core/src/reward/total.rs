//! The multi-task reward: per-segment sub-rewards, the action/frontier
//! consistency coefficient, tool-dependent scaling and the clipped total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MoveAction, Pose};
use crate::memory::tokenize;
use crate::task::AnswerFormat;

use super::parse::AgentResponse;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_act: f64,
    pub w_front: f64,
    pub w_ans: f64,
    pub w_fmt: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_act: 0.2,
            w_front: 0.2,
            w_ans: 0.4,
            w_fmt: 0.2,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_act, self.w_front, self.w_ans, self.w_fmt];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::OutOfRange(format!("reward weights must be finite and >= 0: {all:?}")));
        }
        Ok(())
    }
}

/// Multipliers per sub-reward, `[action, frontier, answer, format]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors {
    pub success: [f64; 4],
    pub fail_or_absent: [f64; 4],
}

impl Default for ScalingFactors {
    fn default() -> Self {
        ScalingFactors {
            success: [1.2; 4],
            fail_or_absent: [0.6, 0.6, 0.5, 0.5],
        }
    }
}

impl ScalingFactors {
    pub fn profile(&self, tool: ToolStatus) -> [f64; 4] {
        match tool {
            ToolStatus::Success => self.success,
            ToolStatus::FailOrAbsent => self.fail_or_absent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    /// Coefficient applied to inconsistent pairs.
    pub penalty: f64,
    /// `Forward` is consistent while the frontier is within this many degrees of the heading.
    pub forward_half_angle_deg: f64,
    /// Turns are consistent once the frontier is further than this off-axis on the matching side.
    pub turn_min_deg: f64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig {
            penalty: 0.5,
            forward_half_angle_deg: 45.0,
            turn_min_deg: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub scaling: ScalingFactors,
    pub consistency: ConsistencyConfig,
    /// Format reward is 1 only when all three segments are present.
    #[serde(default)]
    pub binary_format: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Success,
    FailOrAbsent,
}

/// Consistency coefficient for an (action, frontier) pair seen from `pose`.
///
/// Bearings here follow the pose convention (positive to the right), so
/// `TurnRight` matches targets on the positive side. A target exactly
/// behind is consistent with either turn.
pub fn consistency(
    action: Option<MoveAction>,
    frontier: Option<(f64, f64)>,
    pose: &Pose,
    cfg: &ConsistencyConfig,
) -> f64 {
    let (Some(action), Some((fx, fy))) = (action, frontier) else {
        return 1.0;
    };
    let b = pose.bearing_to(fx, fy);
    let ok = match action {
        MoveAction::Forward => b.abs() <= cfg.forward_half_angle_deg,
        MoveAction::TurnRight => b > cfg.turn_min_deg,
        MoveAction::TurnLeft => b < -cfg.turn_min_deg || b == 180.0,
        MoveAction::Stop => false,
    };
    if ok {
        1.0
    } else {
        cfg.penalty
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SubRewards {
    pub action: f64,
    pub frontier: f64,
    pub answer: f64,
    pub format: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_action: f64,
    pub r_frontier: f64,
    pub r_answer: f64,
    pub r_format: f64,
    pub c: f64,
    pub tool: ToolStatus,
    pub alpha: [f64; 4],
    pub unclipped: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn sub_rewards(&self) -> SubRewards {
        SubRewards {
            action: self.r_action,
            frontier: self.r_frontier,
            answer: self.r_answer,
            format: self.r_format,
        }
    }

    /// Re-evaluates the total from the stored fields.
    pub fn recompute(&self, weights: &RewardWeights) -> f64 {
        weighted_sum(&self.sub_rewards(), self.c, &self.alpha, weights).clamp(0.0, 1.0)
    }
}

fn weighted_sum(r: &SubRewards, c: f64, a: &[f64; 4], w: &RewardWeights) -> f64 {
    w.w_act * r.action * c * a[0]
        + w.w_front * r.frontier * c * a[1]
        + w.w_ans * r.answer * a[2]
        + w.w_fmt * r.format * a[3]
}

/// Combines sub-rewards into a breakdown.
pub fn combine(
    r: SubRewards,
    c: f64,
    tool: ToolStatus,
    weights: &RewardWeights,
    scaling: &ScalingFactors,
) -> RewardBreakdown {
    let alpha = scaling.profile(tool);
    let unclipped = weighted_sum(&r, c, &alpha, weights);
    RewardBreakdown {
        r_action: r.action,
        r_frontier: r.frontier,
        r_answer: r.answer,
        r_format: r.format,
        c,
        tool,
        alpha,
        unclipped,
        total: unclipped.clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(default)]
    pub action: Option<MoveAction>,
    #[serde(default)]
    pub frontier_id: Option<u32>,
    #[serde(default)]
    pub answer: Option<String>,
    #[serde(default = "default_format")]
    pub answer_format: AnswerFormat,
}

fn default_format() -> AnswerFormat {
    AnswerFormat::Choice
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardContext<'a> {
    pub pose: Pose,
    pub frontiers: &'a [FrontierPoint],
    pub tool: ToolStatus,
}

fn normalize_choice(s: &str) -> String {
    s.trim()
        .trim_end_matches(['.', '!', '?'])
        .trim()
        .to_lowercase()
}

/// Token-overlap F1 between two strings (multiset overlap of tokens).
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = tokenize(pred);
    let g = tokenize(gold);
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut remaining = g.clone();
    let mut overlap = 0usize;
    for t in &p {
        if let Some(pos) = remaining.iter().position(|x| x == t) {
            remaining.swap_remove(pos);
            overlap += 1;
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn answer_reward(pred: Option<&str>, gold: Option<&str>, format: AnswerFormat) -> f64 {
    let (Some(pred), Some(gold)) = (pred, gold) else {
        return 0.0;
    };
    match format {
        AnswerFormat::Choice => {
            if normalize_choice(pred) == normalize_choice(gold) {
                1.0
            } else {
                0.0
            }
        }
        AnswerFormat::OpenEnded => token_f1(pred, gold),
    }
}

pub fn total_reward(
    resp: &AgentResponse,
    gt: &GroundTruth,
    ctx: &RewardContext<'_>,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let r_action = match (resp.action, gt.action) {
        (Some(a), Some(b)) if a == b => 1.0,
        _ => 0.0,
    };
    let r_frontier = match (resp.frontier_id, gt.frontier_id) {
        (Some(a), Some(b)) if a == b => 1.0,
        _ => 0.0,
    };
    let r_answer = answer_reward(resp.answer.as_deref(), gt.answer.as_deref(), gt.answer_format);
    let r_format = if cfg.binary_format {
        if resp.segments.count() == 3 {
            1.0
        } else {
            0.0
        }
    } else {
        resp.segments.fraction()
    };
    let frontier_point = resp
        .frontier_id
        .and_then(|id| ctx.frontiers.iter().find(|f| f.id == id))
        .map(|f| (f.x, f.y));
    let c = consistency(resp.action, frontier_point, &ctx.pose, &cfg.consistency);
    combine(
        SubRewards {
            action: r_action,
            frontier: r_frontier,
            answer: r_answer,
            format: r_format,
        },
        c,
        ctx.tool,
        &cfg.weights,
        &cfg.scaling,
    )
}
