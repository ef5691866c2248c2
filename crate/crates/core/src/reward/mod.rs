//! Response parsing, the multi-task reward and group-relative advantages.

mod grpo;
mod parse;
mod rollout;
mod total;

pub use grpo::{group_relative_advantages, ADVANTAGE_EPS, KL_COEFFICIENT};
pub use parse::{parse_response, AgentResponse, SegmentPresence, ToolCall};
pub use rollout::{score_rollouts, RewardConstants, RolloutRecord, ScoredRollout};
pub use total::{
    answer_reward, combine, consistency, token_f1, total_reward, ConsistencyConfig, FrontierPoint,
    GroundTruth, RewardBreakdown, RewardConfig, RewardContext, RewardWeights, ScalingFactors,
    SubRewards, ToolStatus,
};
