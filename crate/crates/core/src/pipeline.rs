//! Memory-augmented training-data construction from episode logs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::FrontierSummary;
use crate::geometry::MoveAction;
use crate::memory::{
    fnv1a64, EmbeddingProvider, MemoryBank, ObservationState, SimilarityWeights,
    DEFAULT_INSERT_INTERVAL, DEFAULT_NOVELTY_WINDOW,
};
use crate::retrieval::{retrieve, Channel, RetrievalConfig};
use crate::sim::{EpisodeLog, LogRecord, View};
use crate::task::{AnswerFormat, Difficulty, QuestionType, Task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Minimum gap between two samples, in steps.
    pub sample_interval: usize,
    pub memory_interval: usize,
    /// Length of the action window that must be uniform.
    pub window: usize,
    /// Largest number of distinct actions tolerated inside the window.
    pub max_distinct_actions: usize,
    pub novelty_window: usize,
    pub similarity: SimilarityWeights,
    pub retrieval: RetrievalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sample_interval: 20,
            memory_interval: DEFAULT_INSERT_INTERVAL,
            window: 6,
            max_distinct_actions: 1,
            novelty_window: DEFAULT_NOVELTY_WINDOW,
            similarity: SimilarityWeights::default(),
            retrieval: RetrievalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryHint {
    pub index: usize,
    pub caption: String,
    pub score: f64,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleQuestion {
    pub question: String,
    pub qtype: QuestionType,
    pub format: AnswerFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    /// Subtask the question is about; always completed before the sample.
    pub subtask: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub instruction: String,
    pub subtask_descriptor: String,
    pub views: Vec<View>,
    pub frontiers: Vec<FrontierSummary>,
    pub memory_hint: Vec<MemoryHint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<SampleQuestion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleLabel {
    pub next_action: MoveAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_frontier_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub task_id: String,
    pub step: usize,
    pub subtask: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    pub prompt: PromptContext,
    /// Number of bank entries visible to this sample (a prefix of the final bank).
    pub bank_len: usize,
    pub trajectory_len: usize,
    pub label: SampleLabel,
}

struct StepView<'a> {
    step: usize,
    subtask: usize,
    pose: crate::geometry::Pose,
    action: MoveAction,
    views: &'a [View],
    frontiers: &'a [FrontierSummary],
}

/// True when the `window` actions starting at `i` stay within one subtask
/// and use at most `max_distinct` different actions.
fn window_ok(steps: &[StepView<'_>], i: usize, window: usize, max_distinct: usize) -> bool {
    if window == 0 || i + window > steps.len() {
        return false;
    }
    let w = &steps[i..i + window];
    if w.iter().any(|s| s.subtask != w[0].subtask) {
        return false;
    }
    let distinct: BTreeSet<MoveAction> = w.iter().map(|s| s.action).collect();
    distinct.len() <= max_distinct
}

/// Converts one episode log into training samples. Returns the samples and
/// the final memory bank they index into.
pub fn build_samples(
    log: &EpisodeLog,
    task: &Task,
    cfg: &PipelineConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<(Vec<TrainingSample>, MemoryBank)> {
    let mut steps: Vec<StepView<'_>> = Vec::new();
    // goal memories to inject after the step with this many prior steps
    let mut goal_events: Vec<(usize, usize, &crate::sim::GoalMemoryEvent)> = Vec::new();
    for r in &log.records {
        match r {
            LogRecord::Step {
                step,
                subtask,
                pose,
                action,
                views,
                frontiers,
                ..
            } => steps.push(StepView {
                step: *step,
                subtask: *subtask,
                pose: *pose,
                action: *action,
                views,
                frontiers,
            }),
            LogRecord::SubtaskEnd {
                subtask,
                goal_memory: Some(g),
                ..
            } => goal_events.push((steps.len(), *subtask, g)),
            _ => {}
        }
    }
    for (i, s) in steps.iter().enumerate() {
        if s.subtask >= task.subtasks.len() {
            return Err(Error::Contract(format!(
                "log step {i} refers to subtask {} but the task has {}",
                s.subtask,
                task.subtasks.len()
            )));
        }
    }

    let trajectory_len = steps.len();
    let mut bank = MemoryBank::new(cfg.similarity);
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(task.id.as_bytes()));
    let mut samples = Vec::new();
    let mut last_sample: Option<usize> = None;
    let mut completed: BTreeSet<usize> = BTreeSet::new();
    let mut goal_iter = goal_events.iter().peekable();

    for i in 0..steps.len() {
        while let Some((at, sub, g)) = goal_iter.peek() {
            if *at > i {
                break;
            }
            let obs = ObservationState::from_views(g.pose, &g.views, embedder);
            bank.force_goal_memory(&obs, steps[i].step)?;
            completed.insert(*sub);
            goal_iter.next();
        }
        let s = &steps[i];
        let obs = ObservationState::from_views(s.pose, s.views, embedder);
        bank.maybe_insert(&obs, s.step, cfg.memory_interval, cfg.novelty_window)?;

        if !window_ok(&steps, i, cfg.window, cfg.max_distinct_actions) {
            continue;
        }
        if last_sample.is_some_and(|l| i - l < cfg.sample_interval) {
            continue;
        }
        last_sample = Some(i);

        let sub = &task.subtasks[s.subtask];
        let past: Vec<usize> = task
            .questions
            .iter()
            .enumerate()
            .filter(|(_, q)| task.question_goal(q).is_some_and(|g| completed.contains(&g)))
            .map(|(k, _)| k)
            .collect();
        let qa = past.choose(&mut rng).map(|&k| &task.questions[k]);
        let gt_frontier_id = s
            .frontiers
            .iter()
            .min_by(|a, b| {
                let da = a.nav_point.distance(&sub.goal_pose);
                let db = b.nav_point.distance(&sub.goal_pose);
                da.total_cmp(&db).then(a.id.cmp(&b.id))
            })
            .map(|f| f.id);
        let memory_hint = if bank.is_empty() {
            Vec::new()
        } else {
            retrieve(&bank, &sub.goal_tag, embedder, &cfg.retrieval)?
                .entries
                .iter()
                .map(|m| MemoryHint {
                    index: m.entry.index,
                    caption: m.entry.caption.clone(),
                    score: m.score,
                    channel: m.channel,
                })
                .collect()
        };
        samples.push(TrainingSample {
            task_id: task.id.clone(),
            step: s.step,
            subtask: s.subtask,
            difficulty: task.difficulty,
            prompt: PromptContext {
                instruction: task.instruction.clone(),
                subtask_descriptor: sub.descriptor.clone(),
                views: s.views.to_vec(),
                frontiers: s.frontiers.to_vec(),
                memory_hint,
                question: qa.map(|q| SampleQuestion {
                    question: q.question.clone(),
                    qtype: q.qtype,
                    format: q.format,
                    choices: q.choices.clone(),
                    subtask: task.question_goal(q).unwrap_or(0),
                }),
            },
            bank_len: bank.len(),
            trajectory_len,
            label: SampleLabel {
                next_action: s.action,
                gt_frontier_id,
                answer: qa.map(|q| q.answer.clone()),
            },
        });
    }
    for (_, _, g) in goal_iter {
        let obs = ObservationState::from_views(g.pose, &g.views, embedder);
        bank.force_goal_memory(&obs, trajectory_len)?;
    }
    Ok((samples, bank))
}

pub fn write_samples<W: Write>(samples: &[TrainingSample], mut out: W) -> Result<()> {
    for s in samples {
        let line = serde_json::to_string(s).map_err(|e| Error::json("training sample", e))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<samples>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub samples: usize,
    pub tasks: usize,
    pub per_difficulty: BTreeMap<String, usize>,
    pub per_qtype: BTreeMap<String, usize>,
    pub per_action: BTreeMap<String, usize>,
    /// Mean trajectory length over the distinct tasks that produced samples.
    pub avg_steps_per_task: f64,
    pub with_question: usize,
}

pub fn dataset_stats(samples: &[TrainingSample]) -> DatasetStats {
    let mut stats = DatasetStats {
        samples: samples.len(),
        ..Default::default()
    };
    let mut lens: BTreeMap<&str, usize> = BTreeMap::new();
    for s in samples {
        let d = s.difficulty.map_or("Unknown", |d| d.label());
        *stats.per_difficulty.entry(d.to_string()).or_default() += 1;
        *stats
            .per_action
            .entry(s.label.next_action.as_str().to_string())
            .or_default() += 1;
        if let Some(q) = &s.prompt.question {
            *stats.per_qtype.entry(q.qtype.as_str().to_string()).or_default() += 1;
            stats.with_question += 1;
        }
        lens.insert(&s.task_id, s.trajectory_len);
    }
    stats.tasks = lens.len();
    if !lens.is_empty() {
        stats.avg_steps_per_task = lens.values().sum::<usize>() as f64 / lens.len() as f64;
    }
    stats
}
