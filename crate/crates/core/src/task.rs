//! Multi-goal tasks, question schema and difficulty bands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::pathfinding::DistanceField;
use crate::scene::Scene;

/// Upper bound (inclusive) of the easy band, meters.
pub const EASY_MAX_M: f64 = 5.0;
/// Upper bound (inclusive) of the medium band, meters.
pub const MEDIUM_MAX_M: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn from_distance(max_goal_distance_m: f64) -> Difficulty {
        if max_goal_distance_m <= EASY_MAX_M {
            Difficulty::Easy
        } else if max_goal_distance_m <= MEDIUM_MAX_M {
            Difficulty::Medium
        } else {
            Difficulty::Hard
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Difficulty::Easy => "Easy",
            Difficulty::Medium => "Medium",
            Difficulty::Hard => "Hard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Attribute,
    Counting,
    Location,
    Relationship,
    State,
}

impl QuestionType {
    pub const ALL: [QuestionType; 5] = [
        QuestionType::Attribute,
        QuestionType::Counting,
        QuestionType::Location,
        QuestionType::Relationship,
        QuestionType::State,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionType::Attribute => "attribute",
            QuestionType::Counting => "counting",
            QuestionType::Location => "location",
            QuestionType::Relationship => "relationship",
            QuestionType::State => "state",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerFormat {
    OpenEnded,
    Choice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub qtype: QuestionType,
    pub format: AnswerFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subtask {
    pub goal_tag: String,
    pub goal_pose: Pose,
    pub descriptor: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub scene: String,
    pub start: Pose,
    pub instruction: String,
    pub subtasks: Vec<Subtask>,
    pub questions: Vec<QaItem>,
    pub difficulty: Option<Difficulty>,
}

#[derive(Serialize, Deserialize)]
struct SubtaskFile {
    goal_tag: String,
    x: f64,
    y: f64,
    descriptor: String,
}

#[derive(Serialize, Deserialize)]
struct TaskFile {
    id: String,
    #[serde(default)]
    scene: String,
    #[serde(default)]
    start: Option<Pose>,
    instruction: String,
    subtasks: Vec<SubtaskFile>,
    questions: Vec<QaItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    difficulty: Option<Difficulty>,
}

impl Task {
    pub fn validate(&self) -> Result<()> {
        if self.subtasks.len() < 2 {
            return Err(invalid(
                "subtasks",
                format!("need at least 2 goals, got {}", self.subtasks.len()),
            ));
        }
        for (i, s) in self.subtasks.iter().enumerate() {
            if s.goal_tag.trim().is_empty() {
                return Err(invalid(format!("subtasks[{i}].goal_tag"), "empty tag"));
            }
        }
        for (i, q) in self.questions.iter().enumerate() {
            if self.question_goal(q).is_none() {
                return Err(invalid(
                    format!("questions[{i}].question"),
                    "does not mention any subtask goal tag",
                ));
            }
            match (q.format, &q.choices) {
                (AnswerFormat::Choice, Some(choices)) => {
                    if !(2..=5).contains(&choices.len()) {
                        return Err(invalid(
                            format!("questions[{i}].choices"),
                            format!("need 2-5 choices, got {}", choices.len()),
                        ));
                    }
                    let hits = choices.iter().filter(|c| **c == q.answer).count();
                    if hits != 1 {
                        return Err(invalid(
                            format!("questions[{i}].choices"),
                            format!("answer must appear exactly once, found {hits}"),
                        ));
                    }
                }
                (AnswerFormat::Choice, None) => {
                    return Err(invalid(format!("questions[{i}].choices"), "missing"));
                }
                (AnswerFormat::OpenEnded, _) => {}
            }
        }
        Ok(())
    }

    /// Index of the subtask whose goal tag the question mentions. Longer tags
    /// win over shorter ones; ties resolve to the earliest subtask.
    pub fn question_goal(&self, q: &QaItem) -> Option<usize> {
        let words: Vec<String> = crate::memory::tokenize(&q.question);
        let mut best: Option<(usize, usize)> = None;
        for (i, s) in self.subtasks.iter().enumerate() {
            let tag_words = crate::memory::tokenize(&s.goal_tag);
            if tag_words.is_empty() {
                continue;
            }
            let found = words
                .windows(tag_words.len())
                .any(|w| w == tag_words.as_slice());
            if found && best.is_none_or(|(len, _)| tag_words.len() > len) {
                best = Some((tag_words.len(), i));
            }
        }
        best.map(|(_, i)| i)
    }

    pub fn to_json(&self) -> String {
        let file = TaskFile {
            id: self.id.clone(),
            scene: self.scene.clone(),
            start: Some(self.start),
            instruction: self.instruction.clone(),
            subtasks: self
                .subtasks
                .iter()
                .map(|s| SubtaskFile {
                    goal_tag: s.goal_tag.clone(),
                    x: s.goal_pose.x,
                    y: s.goal_pose.y,
                    descriptor: s.descriptor.clone(),
                })
                .collect(),
            questions: self.questions.clone(),
            difficulty: self.difficulty,
        };
        serde_json::to_string(&file).expect("task serializes")
    }

    pub fn from_json(text: &str) -> Result<Task> {
        let file: TaskFile = serde_json::from_str(text).map_err(|e| Error::json("task", e))?;
        let start = file.start.ok_or_else(|| invalid("start", "missing start pose"))?;
        let task = Task {
            id: file.id,
            scene: file.scene,
            start: Pose::new(start.x, start.y, start.heading),
            instruction: file.instruction,
            subtasks: file
                .subtasks
                .into_iter()
                .map(|s| Subtask {
                    goal_tag: s.goal_tag,
                    goal_pose: Pose::new(s.x, s.y, 0.0),
                    descriptor: s.descriptor,
                })
                .collect(),
            questions: file.questions,
            difficulty: file.difficulty,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

pub fn load_task(path: impl AsRef<Path>) -> Result<Task> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Task::from_json(&text)
}

/// Geodesic distance from `start` to every goal of the task, in subtask order.
pub fn goal_distances(scene: &Scene, start: &Pose, task: &Task) -> Result<Vec<f64>> {
    let src = scene
        .cell_of(start.x, start.y)
        .filter(|c| scene.is_free_cell(*c))
        .ok_or_else(|| Error::Contract("start pose is not on a free cell".into()))?;
    let field = DistanceField::compute(scene, src).expect("source checked free");
    task.subtasks
        .iter()
        .map(|s| {
            scene
                .cell_of(s.goal_pose.x, s.goal_pose.y)
                .and_then(|c| field.distance(c))
                .ok_or_else(|| Error::Unreachable {
                    goal: s.goal_tag.clone(),
                })
        })
        .collect()
}

/// Bands a task by its farthest goal from `start`. Goal count is not used.
pub fn classify_difficulty(scene: &Scene, start: &Pose, task: &Task) -> Result<Difficulty> {
    let distances = goal_distances(scene, start, task)?;
    let max = distances.into_iter().fold(0.0_f64, f64::max);
    Ok(Difficulty::from_distance(max))
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidTask {
        field: field.into(),
        reason: reason.into(),
    }
}
