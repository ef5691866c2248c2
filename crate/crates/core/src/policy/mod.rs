//! The policy contract, built-in baselines and the external wire protocol.

mod external;
mod greedy;
mod oracle;
mod random;
mod wire;

pub use external::{ChannelTransport, ChildTransport, ExternalPolicy, Transport, DEFAULT_TIMEOUT};
pub use greedy::GreedyFrontierPolicy;
pub use oracle::{plan_actions, OraclePolicy};
pub use random::RandomPolicy;
pub use wire::{
    FrontierInfo, MemoryInfo, QuestionInfo, RequestKind, StepRequest, SubtaskInfo, WireResponse,
    WIRE_VERSION,
};

use crate::scene::Scene;
use crate::task::Task;
use crate::reward::AgentResponse;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("policy timed out after {0} ms")]
    Timeout(u128),
    #[error("malformed policy message: {0}")]
    Malformed(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("policy reported an error: {0}")]
    Client(String),
}

pub trait Policy: Send {
    fn name(&self) -> String;

    /// Called once before the first request of an episode.
    fn begin_episode(&mut self, _scene: &Scene, _task: &Task) -> Result<(), PolicyError> {
        Ok(())
    }

    /// One decision. Returning a tool call is allowed once per step; the
    /// runner then repeats the request with `memories` filled in.
    fn decide(&mut self, req: &StepRequest) -> Result<AgentResponse, PolicyError>;
}

/// Builds a policy by built-in name.
pub fn builtin(name: &str, seed: u64) -> Option<Box<dyn Policy>> {
    match name {
        "random" => Some(Box::new(RandomPolicy::new(seed))),
        "greedy" => Some(Box::new(GreedyFrontierPolicy::new(seed))),
        "oracle" => Some(Box::new(OraclePolicy::new())),
        "oracle-no-memory" => Some(Box::new(OraclePolicy::without_memory())),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["random", "greedy", "oracle", "oracle-no-memory"];

/// First choice for choice questions, a fixed string otherwise.
pub(crate) fn default_answer(q: &QuestionInfo) -> String {
    q.choices
        .as_ref()
        .and_then(|c| c.first().cloned())
        .unwrap_or_else(|| "unknown".to_string())
}
