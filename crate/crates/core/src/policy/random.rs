use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::MoveAction;
use crate::reward::{parse_response, AgentResponse};

use super::{default_answer, Policy, PolicyError, RequestKind, StepRequest};

const MOVES: [MoveAction; 3] = [MoveAction::Forward, MoveAction::TurnLeft, MoveAction::TurnRight];

/// Uniform choice among the three motion actions; never stops and never
/// calls the tool. Answers with the first choice.
pub struct RandomPolicy {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub(crate) fn next_action(&mut self) -> MoveAction {
        MOVES[self.rng.gen_range(0..MOVES.len())]
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        format!("random(seed={})", self.seed)
    }

    fn begin_episode(&mut self, _scene: &crate::scene::Scene, task: &crate::task::Task) -> Result<(), PolicyError> {
        // per-task stream so results do not depend on task order
        self.rng = ChaCha8Rng::seed_from_u64(self.seed ^ crate::memory::fnv1a64(task.id.as_bytes()));
        Ok(())
    }

    fn decide(&mut self, req: &StepRequest) -> Result<AgentResponse, PolicyError> {
        if req.kind == RequestKind::Qa {
            let q = req.question.as_ref().ok_or_else(|| PolicyError::Protocol("qa request without question".into()))?;
            return Ok(parse_response(&AgentResponse::render(None, None, Some(&default_answer(q)))));
        }
        let action = self.next_action();
        let frontier = if req.frontiers.is_empty() {
            None
        } else {
            Some(req.frontiers[self.rng.gen_range(0..req.frontiers.len())].id)
        };
        Ok(parse_response(&AgentResponse::render(Some(action), frontier, None)))
    }
}
