//! Batch scoring of rollout JSONL and the exported constants block.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::retrieval::DEFAULT_TOPK;

use super::grpo::KL_COEFFICIENT;
use super::parse::parse_response;
use super::total::{
    total_reward, ConsistencyConfig, FrontierPoint, GroundTruth, RewardBreakdown, RewardConfig,
    RewardContext, RewardWeights, ScalingFactors, ToolStatus,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub raw_response: String,
    pub gt: GroundTruth,
    pub pose: Pose,
    pub tool_status: ToolStatus,
    #[serde(default)]
    pub frontiers: Vec<FrontierPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRollout {
    pub line: usize,
    pub breakdown: RewardBreakdown,
    pub total: f64,
}

/// Scores every non-blank line of `input`, writing one JSON object per line.
/// Returns the number of records scored.
pub fn score_rollouts<R: BufRead, W: Write>(input: R, mut out: W, cfg: &RewardConfig) -> Result<usize> {
    let mut n = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<rollouts>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RolloutRecord =
            serde_json::from_str(&line).map_err(|e| Error::json(format!("rollout line {}", i + 1), e))?;
        let resp = parse_response(&rec.raw_response);
        let ctx = RewardContext {
            pose: rec.pose,
            frontiers: &rec.frontiers,
            tool: rec.tool_status,
        };
        let b = total_reward(&resp, &rec.gt, &ctx, cfg);
        let scored = ScoredRollout {
            line: i + 1,
            breakdown: b,
            total: b.total,
        };
        let text = serde_json::to_string(&scored).map_err(|e| Error::json("scored rollout", e))?;
        writeln!(out, "{text}").map_err(|e| Error::io("<output>", e))?;
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConstants {
    pub weights: RewardWeights,
    pub consistency: ConsistencyConfig,
    pub scaling: ScalingFactors,
    pub kl_coefficient: f64,
    pub topk: usize,
}

impl RewardConstants {
    pub fn from_config(cfg: &RewardConfig, topk: usize) -> Self {
        RewardConstants {
            weights: cfg.weights,
            consistency: cfg.consistency,
            scaling: cfg.scaling,
            kl_coefficient: KL_COEFFICIENT,
            topk,
        }
    }
}

impl Default for RewardConstants {
    fn default() -> Self {
        RewardConstants::from_config(&RewardConfig::default(), DEFAULT_TOPK)
    }
}
