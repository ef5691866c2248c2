//! Multi-goal episode loop: navigation subtasks followed by memory-based QA.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::{FrontierConfig, FrontierExtractor, FrontierSummary, OccupancyMap};
use crate::geometry::{MoveAction, Pose};
use crate::memory::{
    EmbeddingProvider, InsertOutcome, MemoryBank, ObservationState, SimilarityWeights,
    DEFAULT_INSERT_INTERVAL, DEFAULT_NOVELTY_WINDOW,
};
use crate::pathfinding::geodesic_distance;
use crate::policy::{
    FrontierInfo, MemoryInfo, Policy, PolicyError, QuestionInfo, RequestKind, StepRequest,
    SubtaskInfo, WIRE_VERSION,
};
use crate::retrieval::{RetrievalConfig, ToolOutcome, ToolSession};
use crate::reward::{answer_reward, AgentResponse};
use crate::scene::Scene;
use crate::task::{AnswerFormat, Difficulty, QuestionType, Task};

use super::episode::{check_success, EpisodeState};
use super::views::{render_views, View, ViewConfig};

pub const LOG_VERSION: u32 = 1;
pub const DEFAULT_BUDGET: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub budget_per_subtask: usize,
    pub view: ViewConfig,
    pub frontier: FrontierConfig,
    pub similarity: SimilarityWeights,
    pub insert_interval: usize,
    pub novelty_window: usize,
    pub retrieval: RetrievalConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            budget_per_subtask: DEFAULT_BUDGET,
            view: ViewConfig::default(),
            frontier: FrontierConfig::default(),
            similarity: SimilarityWeights::default(),
            insert_interval: DEFAULT_INSERT_INTERVAL,
            novelty_window: DEFAULT_NOVELTY_WINDOW,
            retrieval: RetrievalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEvent {
    pub outcome: InsertOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolLog {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub retrieved_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalMemoryEvent {
    pub index: usize,
    pub pose: Pose,
    pub views: Vec<View>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        version: u32,
        engine_version: String,
        task_id: String,
        scene_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        difficulty: Option<Difficulty>,
        instruction: String,
        subtask_count: usize,
        question_count: usize,
        policy: String,
        config: EpisodeConfig,
    },
    Step {
        step: usize,
        subtask: usize,
        pose: Pose,
        action: MoveAction,
        views: Vec<View>,
        frontier_ids: Vec<u32>,
        frontiers: Vec<FrontierSummary>,
        memory_event: MemoryEvent,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        response: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frontier_choice: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tool: Option<ToolLog>,
    },
    SubtaskEnd {
        subtask: usize,
        goal_tag: String,
        success: bool,
        stopped: bool,
        steps: usize,
        path_length: f64,
        shortest: Option<f64>,
        final_pose: Pose,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        goal_memory: Option<GoalMemoryEvent>,
        #[serde(default)]
        aborted: bool,
    },
    Qa {
        index: usize,
        subtask: Option<usize>,
        question: String,
        qtype: QuestionType,
        format: AnswerFormat,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        choices: Option<Vec<String>>,
        gt: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tool: Option<ToolLog>,
        retrieved_ids: Vec<usize>,
        /// Exact-match verdict for choice questions; open answers are judged later.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        correct: Option<bool>,
    },
    Abort {
        step: usize,
        subtask: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub records: Vec<LogRecord>,
}

/// Per-subtask summary pulled from a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskOutcome {
    pub subtask: usize,
    pub success: bool,
    pub path_length: f64,
    pub shortest: Option<f64>,
    pub steps: usize,
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("log record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.to_jsonl().as_bytes())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<EpisodeLog> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<episode log>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::json(format!("episode log line {}", i + 1), e))?,
            );
        }
        Ok(EpisodeLog { records })
    }

    pub fn from_jsonl(text: &str) -> Result<EpisodeLog> {
        Self::read_jsonl(text.as_bytes())
    }

    pub fn task_id(&self) -> Option<&str> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Header { task_id, .. } => Some(task_id.as_str()),
            _ => None,
        })
    }

    pub fn difficulty(&self) -> Option<Difficulty> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Header { difficulty, .. } => *difficulty,
            _ => None,
        })
    }

    pub fn step_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r, LogRecord::Step { .. }))
            .count()
    }

    pub fn actions(&self) -> Vec<MoveAction> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Step { action, .. } => Some(*action),
                _ => None,
            })
            .collect()
    }

    pub fn subtask_outcomes(&self) -> Vec<SubtaskOutcome> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::SubtaskEnd {
                    subtask,
                    success,
                    path_length,
                    shortest,
                    steps,
                    ..
                } => Some(SubtaskOutcome {
                    subtask: *subtask,
                    success: *success,
                    path_length: *path_length,
                    shortest: *shortest,
                    steps: *steps,
                }),
                _ => None,
            })
            .collect()
    }

    pub fn abort_reason(&self) -> Option<&str> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Abort { reason, .. } => Some(reason.as_str()),
            _ => None,
        })
    }
}

fn frontier_infos(pose: &Pose, frontiers: &[crate::frontier::Frontier]) -> Vec<FrontierInfo> {
    frontiers
        .iter()
        .map(|f| FrontierInfo {
            id: f.id,
            bearing: pose.bearing_to(f.nav_point.x, f.nav_point.y),
            distance: pose.distance(&f.nav_point),
            nav_point: f.nav_point,
            cell_count: f.cells.len(),
            snapshot: f.snapshot.clone(),
        })
        .collect()
}

/// Runs the single-round tool protocol around one decision: a tool call is
/// served once and the policy is asked again with the result.
fn decide_with_tool(
    policy: &mut dyn Policy,
    req: &mut StepRequest,
    bank: &MemoryBank,
    embedder: &dyn EmbeddingProvider,
    cfg: &RetrievalConfig,
) -> std::result::Result<(AgentResponse, Option<ToolLog>), PolicyError> {
    let first = policy.decide(req)?;
    if !first.is_tool_call() {
        return Ok((first, None));
    }
    let mut session = ToolSession::new(bank, embedder, *cfg);
    let query = first.tool_call.as_ref().map(|c| c.query.clone());
    let log = match session.handle(&first) {
        ToolOutcome::Ok(result) => {
            req.memories = Some(MemoryInfo::from_result(&result));
            ToolLog {
                query,
                ok: true,
                failure: None,
                retrieved_ids: result.indices(),
            }
        }
        ToolOutcome::Failed(reason) => {
            req.tool_error = Some(reason.to_string());
            ToolLog {
                query,
                ok: false,
                failure: Some(reason.to_string()),
                retrieved_ids: Vec::new(),
            }
        }
    };
    let second = policy.decide(req)?;
    if second.is_tool_call() {
        return Err(PolicyError::Protocol(
            "second tool call within one step".into(),
        ));
    }
    Ok((second, Some(log)))
}

struct Runner<'a> {
    scene: &'a Scene,
    task: &'a Task,
    cfg: &'a EpisodeConfig,
    embedder: &'a dyn EmbeddingProvider,
    state: EpisodeState,
    map: OccupancyMap,
    frontiers: FrontierExtractor,
    bank: MemoryBank,
    records: Vec<LogRecord>,
}

impl Runner<'_> {
    fn subtask_info(&self, k: usize) -> SubtaskInfo {
        let s = &self.task.subtasks[k];
        SubtaskInfo {
            index: k,
            goal_tag: s.goal_tag.clone(),
            descriptor: s.descriptor.clone(),
        }
    }

    /// Runs subtask `k`. Returns an abort reason on protocol failure.
    fn run_subtask(&mut self, k: usize, policy: &mut dyn Policy) -> std::result::Result<(), String> {
        let sub = &self.task.subtasks[k];
        self.state.begin_subtask(k);
        let start = self.state.pose;
        let shortest = geodesic_distance(self.scene, &start, &sub.goal_pose).ok();
        let mut outcome: std::result::Result<(), String> = Ok(());
        loop {
            if check_success(&self.state.pose, sub) || self.state.subtask_stopped {
                break;
            }
            if self.state.subtask_steps >= self.cfg.budget_per_subtask {
                break;
            }
            let pose = self.state.pose;
            let views = render_views(self.scene, &pose, &self.cfg.view);
            self.map.update(self.scene, &pose, &self.cfg.view);
            let frontiers = self
                .frontiers
                .update(&self.map, self.scene, &pose, &self.cfg.view)
                .to_vec();
            let obs = ObservationState::from_views(pose, &views, self.embedder);
            let before = self.bank.len();
            let ins = self
                .bank
                .maybe_insert(&obs, self.state.step, self.cfg.insert_interval, self.cfg.novelty_window)
                .map_err(|e| e.to_string())?;
            let memory_event = MemoryEvent {
                outcome: ins,
                index: (ins == InsertOutcome::Inserted).then_some(before),
            };
            let mut req = StepRequest {
                v: WIRE_VERSION,
                kind: RequestKind::Step,
                instruction: self.task.instruction.clone(),
                step: self.state.step,
                pose,
                subtask: self.subtask_info(k),
                views: views.to_vec(),
                frontiers: frontier_infos(&pose, &frontiers),
                question: None,
                memories: None,
                tool_error: None,
                budget: self.cfg.budget_per_subtask - self.state.subtask_steps,
            };
            let (resp, tool) =
                match decide_with_tool(policy, &mut req, &self.bank, self.embedder, &self.cfg.retrieval) {
                    Ok(r) => r,
                    Err(e) => {
                        outcome = Err(e.to_string());
                        break;
                    }
                };
            let Some(action) = resp.action else {
                outcome = Err(format!(
                    "protocol violation: response carries no valid action: {:?}",
                    resp.raw
                ));
                break;
            };
            self.state
                .advance(self.scene, action)
                .map_err(|e| e.to_string())?;
            self.records.push(LogRecord::Step {
                step: self.state.step - 1,
                subtask: k,
                pose,
                action,
                views: views.to_vec(),
                frontier_ids: frontiers.iter().map(|f| f.id).collect(),
                frontiers: frontiers.iter().map(|f| f.summary()).collect(),
                memory_event,
                response: Some(resp.raw.clone()),
                frontier_choice: resp.frontier_id,
                tool,
            });
        }
        if let Err(reason) = &outcome {
            self.records.push(LogRecord::Abort {
                step: self.state.step,
                subtask: k,
                reason: reason.clone(),
            });
        }
        let success = outcome.is_ok() && check_success(&self.state.pose, sub);
        // goal-directed observation at the end of the subtask
        let final_pose = self.state.pose;
        let goal_pose = Pose::new(
            final_pose.x,
            final_pose.y,
            final_pose.heading_towards(sub.goal_pose.x, sub.goal_pose.y),
        );
        let goal_views = render_views(self.scene, &goal_pose, &self.cfg.view);
        let goal_obs = ObservationState::from_views(goal_pose, &goal_views, self.embedder);
        let goal_memory = match self.bank.force_goal_memory(&goal_obs, self.state.step) {
            Ok(index) => Some(GoalMemoryEvent {
                index,
                pose: goal_pose,
                views: goal_views.to_vec(),
            }),
            Err(_) => None,
        };
        self.records.push(LogRecord::SubtaskEnd {
            subtask: k,
            goal_tag: sub.goal_tag.clone(),
            success,
            stopped: self.state.subtask_stopped,
            steps: self.state.subtask_steps,
            path_length: self.state.subtask_path_m,
            shortest,
            final_pose,
            goal_memory,
            aborted: outcome.is_err(),
        });
        outcome
    }

    fn push_failed_subtask(&mut self, k: usize) {
        let sub = &self.task.subtasks[k];
        self.records.push(LogRecord::SubtaskEnd {
            subtask: k,
            goal_tag: sub.goal_tag.clone(),
            success: false,
            stopped: false,
            steps: 0,
            path_length: 0.0,
            shortest: geodesic_distance(self.scene, &self.state.pose, &sub.goal_pose).ok(),
            final_pose: self.state.pose,
            goal_memory: None,
            aborted: true,
        });
    }

    fn run_qa(&mut self, policy: &mut dyn Policy, aborted: bool) {
        for (i, q) in self.task.questions.iter().enumerate() {
            let goal = self.task.question_goal(q);
            let info = QuestionInfo {
                index: i,
                question: q.question.clone(),
                qtype: q.qtype,
                format: q.format,
                choices: q.choices.clone(),
            };
            let mut answer = None;
            let mut tool = None;
            if !aborted {
                let pose = self.state.pose;
                let mut req = StepRequest {
                    v: WIRE_VERSION,
                    kind: RequestKind::Qa,
                    instruction: self.task.instruction.clone(),
                    step: self.state.step,
                    pose,
                    subtask: self.subtask_info(goal.unwrap_or(0)),
                    views: Vec::new(),
                    frontiers: Vec::new(),
                    question: Some(info),
                    memories: None,
                    tool_error: None,
                    budget: 0,
                };
                match decide_with_tool(policy, &mut req, &self.bank, self.embedder, &self.cfg.retrieval) {
                    Ok((resp, t)) => {
                        answer = resp.answer.clone();
                        tool = t;
                    }
                    Err(e) => {
                        self.records.push(LogRecord::Abort {
                            step: self.state.step,
                            subtask: goal.unwrap_or(0),
                            reason: format!("qa {i}: {e}"),
                        });
                    }
                }
            }
            let correct = (q.format == AnswerFormat::Choice).then(|| {
                answer_reward(answer.as_deref(), Some(&q.answer), AnswerFormat::Choice) == 1.0
            });
            self.records.push(LogRecord::Qa {
                index: i,
                subtask: goal,
                question: q.question.clone(),
                qtype: q.qtype,
                format: q.format,
                choices: q.choices.clone(),
                gt: q.answer.clone(),
                answer,
                retrieved_ids: tool.as_ref().map(|t| t.retrieved_ids.clone()).unwrap_or_default(),
                tool,
                correct,
            });
        }
    }
}

/// Runs every subtask of `task` in order, then the QA phase. Policy
/// failures abort the episode: the remaining subtasks are logged as failed.
pub fn run_episode(
    scene: &Scene,
    task: &Task,
    policy: &mut dyn Policy,
    cfg: &EpisodeConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<EpisodeLog> {
    let mut runner = Runner {
        scene,
        task,
        cfg,
        embedder,
        state: EpisodeState::new(task.start),
        map: OccupancyMap::for_scene(scene),
        frontiers: FrontierExtractor::new(cfg.frontier),
        bank: MemoryBank::new(cfg.similarity),
        records: vec![LogRecord::Header {
            version: LOG_VERSION,
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            task_id: task.id.clone(),
            scene_id: scene.id.clone(),
            difficulty: task.difficulty,
            instruction: task.instruction.clone(),
            subtask_count: task.subtasks.len(),
            question_count: task.questions.len(),
            policy: policy.name(),
            config: cfg.clone(),
        }],
    };
    let mut aborted = false;
    if let Err(e) = policy.begin_episode(scene, task) {
        runner.records.push(LogRecord::Abort {
            step: 0,
            subtask: 0,
            reason: e.to_string(),
        });
        aborted = true;
    }
    for k in 0..task.subtasks.len() {
        if aborted {
            runner.push_failed_subtask(k);
            continue;
        }
        if runner.run_subtask(k, policy).is_err() {
            aborted = true;
        }
    }
    runner.state.done = true;
    runner.run_qa(policy, aborted);
    Ok(EpisodeLog {
        records: runner.records,
    })
}

/// Rebuilds the memory bank a run produced, from its log.
pub fn replay_memory(
    log: &EpisodeLog,
    cfg: &EpisodeConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<MemoryBank> {
    let mut bank = MemoryBank::new(cfg.similarity);
    let mut steps = 0;
    for r in &log.records {
        match r {
            LogRecord::Step { step, pose, views, .. } => {
                let obs = ObservationState::from_views(*pose, views, embedder);
                bank.maybe_insert(&obs, *step, cfg.insert_interval, cfg.novelty_window)?;
                steps = step + 1;
            }
            LogRecord::SubtaskEnd {
                goal_memory: Some(g),
                ..
            } => {
                let obs = ObservationState::from_views(g.pose, &g.views, embedder);
                bank.force_goal_memory(&obs, steps)?;
            }
            _ => {}
        }
    }
    Ok(bank)
}
