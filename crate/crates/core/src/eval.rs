//! Benchmark metrics: SR, SPL, choice accuracy and judged open-answer score.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::tokenize;
use crate::reward::{answer_reward, token_f1};
use crate::sim::{EpisodeLog, LogRecord, View};
use crate::task::{AnswerFormat, Difficulty, QuestionType, Task};

/// Multiplier from a mean 1..=5 judge score to the 0..100 scale.
pub const SCORE_SCALE: f64 = 20.0;
pub const SCORE_MAPPING: &str = "mean_x20";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub path_length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shortest: Option<f64>,
}

/// Per-outcome SPL term `S * l / max(p, l)`.
pub fn spl_term(e: &EpisodeOutcome) -> Result<f64> {
    if !e.success {
        return Ok(0.0);
    }
    let l = e
        .shortest
        .ok_or_else(|| Error::Contract("successful outcome without a shortest path".into()))?;
    if l.is_nan() || l <= 0.0 || e.path_length.is_nan() || e.path_length < 0.0 {
        return Err(Error::OutOfRange(format!(
            "path length {} / shortest {l}",
            e.path_length
        )));
    }
    Ok(l / e.path_length.max(l))
}

pub fn spl(eps: &[EpisodeOutcome]) -> Result<f64> {
    if eps.is_empty() {
        return Err(Error::Empty("episodes"));
    }
    let mut sum = 0.0;
    for e in eps {
        sum += spl_term(e)?;
    }
    Ok(100.0 * sum / eps.len() as f64)
}

pub fn success_rate(eps: &[EpisodeOutcome]) -> Result<f64> {
    if eps.is_empty() {
        return Err(Error::Empty("episodes"));
    }
    let n = eps.iter().filter(|e| e.success).count();
    Ok(100.0 * n as f64 / eps.len() as f64)
}

pub fn open_score(scores: &[u8]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("judge scores"));
    }
    if let Some(s) = scores.iter().find(|s| !(1..=5).contains(*s)) {
        return Err(Error::OutOfRange(format!("judge score {s}")));
    }
    let sum: u32 = scores.iter().map(|&s| s as u32).sum();
    Ok(sum as f64 / scores.len() as f64 * SCORE_SCALE)
}

/// Scores an open-ended answer on 1..=5.
pub trait Judge: Sync {
    fn name(&self) -> &str;
    fn score(&self, question: &str, gt: &str, predicted: &str, goal_obs: &[View]) -> Result<u8>;
}

/// Exact token match scores 5; otherwise token F1 is banded into 1..=4.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleJudge;

impl Judge for RuleJudge {
    fn name(&self) -> &str {
        "rule"
    }

    fn score(&self, _question: &str, gt: &str, predicted: &str, _goal_obs: &[View]) -> Result<u8> {
        let (p, g) = (tokenize(predicted), tokenize(gt));
        if !p.is_empty() && p == g {
            return Ok(5);
        }
        let f1 = token_f1(predicted, gt);
        Ok(match f1 {
            f if f >= 0.8 => 4,
            f if f >= 0.5 => 3,
            f if f >= 0.2 => 2,
            _ => 1,
        })
    }
}

/// Raw counts and sums behind one report row. Metrics are derived from
/// these, so rows add up exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub episodes: usize,
    pub subtasks: usize,
    pub successes: usize,
    pub spl_sum: f64,
    pub choice_total: usize,
    pub choice_correct: usize,
    pub open_total: usize,
    pub open_score_sum: u64,
}

impl Tally {
    pub fn merge(&mut self, o: &Tally) {
        self.episodes += o.episodes;
        self.subtasks += o.subtasks;
        self.successes += o.successes;
        self.spl_sum += o.spl_sum;
        self.choice_total += o.choice_total;
        self.choice_correct += o.choice_correct;
        self.open_total += o.open_total;
        self.open_score_sum += o.open_score_sum;
    }

    fn pct(num: f64, den: usize) -> Option<f64> {
        (den > 0).then(|| 100.0 * num / den as f64)
    }

    pub fn sr(&self) -> Option<f64> {
        Self::pct(self.successes as f64, self.subtasks)
    }

    pub fn spl(&self) -> Option<f64> {
        Self::pct(self.spl_sum, self.subtasks)
    }

    pub fn acc(&self) -> Option<f64> {
        Self::pct(self.choice_correct as f64, self.choice_total)
    }

    pub fn score(&self) -> Option<f64> {
        (self.open_total > 0)
            .then(|| self.open_score_sum as f64 / self.open_total as f64 * SCORE_SCALE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub label: String,
    pub tally: Tally,
    pub sr: Option<f64>,
    pub spl: Option<f64>,
    pub score: Option<f64>,
    pub acc: Option<f64>,
}

impl MetricRow {
    pub fn new(label: impl Into<String>, tally: Tally) -> Self {
        MetricRow {
            label: label.into(),
            sr: tally.sr(),
            spl: tally.spl(),
            score: tally.score(),
            acc: tally.acc(),
            tally,
        }
    }
}

/// Per-episode contribution, grouped by question type for the QA part.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTally {
    pub policy: String,
    pub difficulty: Option<Difficulty>,
    pub aborted: bool,
    pub overall: Tally,
    pub per_qtype: BTreeMap<QuestionType, Tally>,
}

/// Tallies one log. When `task` is given, questions skipped because the
/// episode aborted count as wrong (choice) or score 1 (open).
pub fn tally_episode(log: &EpisodeLog, task: Option<&Task>, judge: &dyn Judge) -> Result<EpisodeTally> {
    let mut t = EpisodeTally::default();
    let mut goal_views: BTreeMap<usize, &[View]> = BTreeMap::new();
    let mut answered = vec![];
    t.overall.episodes = 1;
    for r in &log.records {
        match r {
            LogRecord::Header {
                policy, difficulty, ..
            } => {
                t.policy = policy.clone();
                t.difficulty = *difficulty;
            }
            LogRecord::SubtaskEnd {
                subtask,
                success,
                path_length,
                shortest,
                goal_memory,
                aborted,
                ..
            } => {
                let e = EpisodeOutcome {
                    success: *success,
                    path_length: *path_length,
                    shortest: *shortest,
                };
                t.overall.subtasks += 1;
                t.overall.successes += *success as usize;
                t.overall.spl_sum += spl_term(&e)?;
                t.aborted |= *aborted;
                if let Some(g) = goal_memory {
                    goal_views.insert(*subtask, &g.views);
                }
            }
            LogRecord::Abort { .. } => t.aborted = true,
            LogRecord::Qa {
                index,
                subtask,
                question,
                qtype,
                format,
                gt,
                answer,
                ..
            } => {
                answered.push(*index);
                let q = t.per_qtype.entry(*qtype).or_default();
                match format {
                    AnswerFormat::Choice => {
                        let ok = answer_reward(answer.as_deref(), Some(gt), *format) == 1.0;
                        for x in [&mut t.overall, q] {
                            x.choice_total += 1;
                            x.choice_correct += ok as usize;
                        }
                    }
                    AnswerFormat::OpenEnded => {
                        let obs = subtask.and_then(|s| goal_views.get(&s).copied()).unwrap_or(&[]);
                        let s = match answer {
                            Some(a) => judge.score(question, gt, a, obs)?,
                            None => 1,
                        };
                        if !(1..=5).contains(&s) {
                            return Err(Error::OutOfRange(format!("judge score {s}")));
                        }
                        for x in [&mut t.overall, q] {
                            x.open_total += 1;
                            x.open_score_sum += s as u64;
                        }
                    }
                }
            }
            LogRecord::Step { .. } => {}
        }
    }
    if let Some(task) = task {
        if t.difficulty.is_none() {
            t.difficulty = task.difficulty;
        }
        for (i, q) in task.questions.iter().enumerate() {
            if answered.contains(&i) {
                continue;
            }
            let x = t.per_qtype.entry(q.qtype).or_default();
            for y in [&mut t.overall, x] {
                match q.format {
                    AnswerFormat::Choice => y.choice_total += 1,
                    AnswerFormat::OpenEnded => {
                        y.open_total += 1;
                        y.open_score_sum += 1;
                    }
                }
            }
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub engine_version: String,
    pub policy: String,
    pub judge: String,
    pub score_mapping: String,
    pub episodes: usize,
    pub aborted_episodes: usize,
    pub rows: Vec<MetricRow>,
    pub total: MetricRow,
    pub per_qtype: Vec<MetricRow>,
}

fn difficulty_label(d: Option<Difficulty>) -> &'static str {
    d.map_or("Unknown", |d| d.label())
}

impl BenchReport {
    /// Aggregates per-episode tallies. Rows are Easy, Medium, Hard (always
    /// present) plus Unknown if any episode lacks a difficulty.
    pub fn from_tallies(tallies: &[EpisodeTally], judge: &str) -> Result<BenchReport> {
        if tallies.is_empty() {
            return Err(Error::Empty("episodes"));
        }
        let mut by_diff: BTreeMap<&str, Tally> = BTreeMap::new();
        let mut by_q: BTreeMap<QuestionType, Tally> = BTreeMap::new();
        let mut policies: Vec<&str> = vec![];
        for t in tallies {
            by_diff
                .entry(difficulty_label(t.difficulty))
                .or_default()
                .merge(&t.overall);
            for (q, x) in &t.per_qtype {
                by_q.entry(*q).or_default().merge(x);
            }
            if !policies.contains(&t.policy.as_str()) {
                policies.push(&t.policy);
            }
        }
        let mut labels: Vec<&str> = Difficulty::ALL.iter().map(|d| d.label()).collect();
        if by_diff.contains_key("Unknown") {
            labels.push("Unknown");
        }
        let rows: Vec<MetricRow> = labels
            .iter()
            .map(|l| MetricRow::new(*l, by_diff.get(l).copied().unwrap_or_default()))
            .collect();
        let mut total = Tally::default();
        for r in &rows {
            total.merge(&r.tally);
        }
        Ok(BenchReport {
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            policy: policies.join("+"),
            judge: judge.to_string(),
            score_mapping: SCORE_MAPPING.to_string(),
            episodes: tallies.len(),
            aborted_episodes: tallies.iter().filter(|t| t.aborted).count(),
            rows,
            total: MetricRow::new("Total", total),
            per_qtype: QuestionType::ALL
                .iter()
                .filter_map(|q| by_q.get(q).map(|x| MetricRow::new(q.as_str(), *x)))
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<BenchReport> {
        serde_json::from_str(text).map_err(|e| Error::json("bench report", e))
    }

    /// One line per difficulty plus Total: `difficulty,SR,SPL,Score,Acc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("difficulty,SR,SPL,Score,Acc\n");
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.label,
                fmt_opt(r.sr),
                fmt_opt(r.spl),
                fmt_opt(r.score),
                fmt_opt(r.acc)
            );
        }
        out
    }

    /// Long-format rows `policy,group,metric,value` for plotting tools.
    pub fn to_plot_csv(&self) -> String {
        let mut out = String::from("policy,group,metric,value\n");
        let groups = self
            .rows
            .iter()
            .chain(std::iter::once(&self.total))
            .chain(self.per_qtype.iter());
        for r in groups {
            for (m, v) in [("SR", r.sr), ("SPL", r.spl), ("Score", r.score), ("Acc", r.acc)] {
                if let Some(v) = v {
                    let _ = writeln!(out, "{},{},{m},{v:.4}", self.policy, r.label);
                }
            }
        }
        out
    }

    /// Total tally re-derived from the difficulty rows.
    pub fn recompute_total(&self) -> Tally {
        let mut t = Tally::default();
        for r in &self.rows {
            t.merge(&r.tally);
        }
        t
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_default()
}

/// Tallies every log and aggregates. `tasks` is keyed by task id.
pub fn evaluate(
    logs: &[EpisodeLog],
    tasks: &BTreeMap<String, Task>,
    judge: &dyn Judge,
) -> Result<BenchReport> {
    let tallies = logs
        .iter()
        .map(|l| tally_episode(l, l.task_id().and_then(|id| tasks.get(id)), judge))
        .collect::<Result<Vec<_>>>()?;
    BenchReport::from_tallies(&tallies, judge.name())
}
