//! Procedural multi-room scenes and multi-goal tasks.
//!
//! Rooms come from a recursive split of the floor with two-cell walls and
//! one-meter doors. Objects carry a color and a state so that attribute and
//! state questions are answerable from observation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::memory::fnv1a64;
use crate::pathfinding::DistanceField;
use crate::scene::{Cell, Scene, SceneObject, DEFAULT_CELL_SIZE};
use crate::task::{
    classify_difficulty, AnswerFormat, Difficulty, QaItem, QuestionType, Subtask, Task,
    EASY_MAX_M, MEDIUM_MAX_M,
};

const WALL_CELLS: usize = 2;
const DOOR_CELLS: usize = 10;
const MIN_GOAL_FROM_START_M: f64 = 2.0;
const MIN_OBJECT_SPACING_M: f64 = 0.6;
const WALL_MARGIN_M: f64 = 0.4;
const MIN_GOALS: usize = 2;
const MAX_GOALS: usize = 9;
const CHOICE_SHARE: f64 = 0.7;

const REGIONS: [&str; 12] = [
    "kitchen", "bedroom", "bathroom", "living room", "office", "hallway", "dining room",
    "laundry room", "study", "nursery", "pantry", "lounge",
];

const TAGS: [&str; 30] = [
    "sofa", "table", "chair", "bed", "lamp", "fridge", "oven", "sink", "toilet", "desk", "shelf",
    "plant", "television", "dresser", "mirror", "bathtub", "microwave", "washer", "dryer",
    "cabinet", "piano", "clock", "vase", "stool", "bench", "armchair", "bookcase", "wardrobe",
    "fireplace", "painting",
];

const COLORS: [&str; 8] = ["red", "blue", "green", "white", "black", "yellow", "brown", "gray"];

const STATES: [&str; 6] = ["open", "closed", "on", "off", "clean", "dirty"];

fn states_for(tag: &str) -> [&'static str; 2] {
    match tag {
        "fridge" | "oven" | "cabinet" | "wardrobe" | "microwave" | "washer" | "dryer" | "dresser"
        | "piano" => ["open", "closed"],
        "lamp" | "television" | "clock" | "fireplace" => ["on", "off"],
        _ => ["clean", "dirty"],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub min_room_m: f64,
    pub objects_per_room: (usize, usize),
    pub obstacles_per_room: (usize, usize),
    /// Longest allowed geodesic between consecutive goals.
    pub max_leg_m: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            width_m: 16.0,
            height_m: 16.0,
            min_room_m: 3.5,
            objects_per_room: (3, 5),
            obstacles_per_room: (0, 2),
            max_leg_m: 7.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.width_m.is_finite()
            && self.height_m.is_finite()
            && self.width_m >= 6.0
            && self.height_m >= 6.0
            && self.width_m <= 100.0
            && self.height_m <= 100.0
            && self.min_room_m >= 2.0
            && self.objects_per_room.0 >= 1
            && self.objects_per_room.0 <= self.objects_per_room.1
            && self.obstacles_per_room.0 <= self.obstacles_per_room.1
            && self.max_leg_m > MIN_GOAL_FROM_START_M;
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!("invalid generator size/config: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    r0: usize,
    c0: usize,
    r1: usize,
    c1: usize,
}

impl Rect {
    fn h(&self) -> usize {
        self.r1 - self.r0
    }

    fn w(&self) -> usize {
        self.c1 - self.c0
    }
}

struct Layout {
    width: usize,
    height: usize,
    occupied: Vec<bool>,
    rooms: Vec<Rect>,
}

impl Layout {
    fn set(&mut self, r: usize, c: usize, v: bool) {
        self.occupied[r * self.width + c] = v;
    }

    fn is_occ(&self, r: usize, c: usize) -> bool {
        self.occupied[r * self.width + c]
    }
}

fn split(layout: &mut Layout, rect: Rect, min_cells: usize, rng: &mut ChaCha8Rng) {
    let can_h = rect.h() >= 2 * min_cells + WALL_CELLS;
    let can_v = rect.w() >= 2 * min_cells + WALL_CELLS;
    if !can_h && !can_v {
        layout.rooms.push(rect);
        return;
    }
    // leave some large rooms unsplit for variety
    if rect.h().max(rect.w()) < 3 * min_cells && rng.gen_bool(0.25) {
        layout.rooms.push(rect);
        return;
    }
    let horizontal = if can_h && can_v { rect.h() >= rect.w() } else { can_h };
    if horizontal {
        let p = rng.gen_range(rect.r0 + min_cells..=rect.r1 - min_cells - WALL_CELLS);
        let door = rng.gen_range(rect.c0 + 2..=rect.c1 - DOOR_CELLS - 2);
        for r in p..p + WALL_CELLS {
            for c in rect.c0..rect.c1 {
                if !(door..door + DOOR_CELLS).contains(&c) {
                    layout.set(r, c, true);
                }
            }
        }
        split(layout, Rect { r1: p, ..rect }, min_cells, rng);
        split(layout, Rect { r0: p + WALL_CELLS, ..rect }, min_cells, rng);
    } else {
        let p = rng.gen_range(rect.c0 + min_cells..=rect.c1 - min_cells - WALL_CELLS);
        let door = rng.gen_range(rect.r0 + 2..=rect.r1 - DOOR_CELLS - 2);
        for c in p..p + WALL_CELLS {
            for r in rect.r0..rect.r1 {
                if !(door..door + DOOR_CELLS).contains(&r) {
                    layout.set(r, c, true);
                }
            }
        }
        split(layout, Rect { c1: p, ..rect }, min_cells, rng);
        split(layout, Rect { c0: p + WALL_CELLS, ..rect }, min_cells, rng);
    }
}

/// Largest 4-connected free component, as a mask.
fn main_component(layout: &Layout) -> Vec<bool> {
    let (w, h) = (layout.width, layout.height);
    let mut label = vec![usize::MAX; w * h];
    let mut best = (0usize, usize::MAX);
    let mut next = 0;
    for start in 0..w * h {
        if layout.occupied[start] || label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = next;
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (r, c) = (i / w, i % w);
            let mut push = |nr: usize, nc: usize| {
                let j = nr * w + nc;
                if !layout.occupied[j] && label[j] == usize::MAX {
                    label[j] = next;
                    stack.push(j);
                }
            };
            if r > 0 {
                push(r - 1, c);
            }
            if r + 1 < h {
                push(r + 1, c);
            }
            if c > 0 {
                push(r, c - 1);
            }
            if c + 1 < w {
                push(r, c + 1);
            }
        }
        if size > best.0 {
            best = (size, next);
        }
        next += 1;
    }
    label.iter().map(|l| *l == best.1).collect()
}

fn build_layout(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Layout {
    let width = (cfg.width_m / DEFAULT_CELL_SIZE).round() as usize;
    let height = (cfg.height_m / DEFAULT_CELL_SIZE).round() as usize;
    let mut layout = Layout {
        width,
        height,
        occupied: vec![false; width * height],
        rooms: Vec::new(),
    };
    for r in 0..height {
        for c in 0..width {
            if r < WALL_CELLS || c < WALL_CELLS || r >= height - WALL_CELLS || c >= width - WALL_CELLS {
                layout.set(r, c, true);
            }
        }
    }
    let min_cells = (cfg.min_room_m / DEFAULT_CELL_SIZE).round() as usize;
    let interior = Rect {
        r0: WALL_CELLS,
        c0: WALL_CELLS,
        r1: height - WALL_CELLS,
        c1: width - WALL_CELLS,
    };
    split(&mut layout, interior, min_cells, rng);
    layout
}

fn cell_center((r, c): Cell) -> (f64, f64) {
    ((c as f64 + 0.5) * DEFAULT_CELL_SIZE, (r as f64 + 0.5) * DEFAULT_CELL_SIZE)
}

/// Random cell strictly inside `room`, keeping a margin from its walls.
fn random_cell_in(room: &Rect, rng: &mut ChaCha8Rng) -> Option<Cell> {
    let m = (WALL_MARGIN_M / DEFAULT_CELL_SIZE).ceil() as usize;
    if room.h() <= 2 * m || room.w() <= 2 * m {
        return None;
    }
    Some((
        rng.gen_range(room.r0 + m..room.r1 - m),
        rng.gen_range(room.c0 + m..room.c1 - m),
    ))
}

fn place_obstacles(layout: &mut Layout, cfg: &GenConfig, rng: &mut ChaCha8Rng) {
    let rooms = layout.rooms.clone();
    for room in &rooms {
        let n = rng.gen_range(cfg.obstacles_per_room.0..=cfg.obstacles_per_room.1);
        for _ in 0..n {
            let Some((r, c)) = random_cell_in(room, rng) else { continue };
            let bh = rng.gen_range(3..=6usize);
            let bw = rng.gen_range(3..=6usize);
            // keep a free ring of one meter inside the room walls
            let gap = 10;
            if r < room.r0 + gap || c < room.c0 + gap || r + bh + gap > room.r1 || c + bw + gap > room.c1 {
                continue;
            }
            for rr in r..r + bh {
                for cc in c..c + bw {
                    layout.set(rr, cc, true);
                }
            }
        }
    }
}

struct Placed {
    objects: Vec<SceneObject>,
    regions: Vec<String>,
}

fn place_objects(layout: &Layout, reachable: &[bool], cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Placed {
    let mut region_names: Vec<&str> = REGIONS.to_vec();
    region_names.shuffle(rng);
    let mut objects: Vec<SceneObject> = Vec::new();
    let mut regions = Vec::new();
    for (i, room) in layout.rooms.iter().enumerate() {
        let region = if i < region_names.len() {
            region_names[i].to_string()
        } else {
            format!("{} {}", region_names[i % region_names.len()], i / region_names.len() + 1)
        };
        regions.push(region.clone());
        let n = rng.gen_range(cfg.objects_per_room.0..=cfg.objects_per_room.1);
        let mut placed = 0;
        let mut tries = 0;
        while placed < n && tries < 200 {
            tries += 1;
            let Some(cell) = random_cell_in(room, rng) else { break };
            let idx = cell.0 * layout.width + cell.1;
            if layout.is_occ(cell.0, cell.1) || !reachable[idx] {
                continue;
            }
            let (x, y) = cell_center(cell);
            if objects
                .iter()
                .any(|o| (o.x - x).hypot(o.y - y) < MIN_OBJECT_SPACING_M)
            {
                continue;
            }
            let tag = *TAGS.choose(rng).expect("non-empty");
            let state = states_for(tag)[rng.gen_range(0..2)];
            objects.push(SceneObject {
                tag: tag.to_string(),
                x,
                y,
                region: region.clone(),
                color: Some(COLORS.choose(rng).expect("non-empty").to_string()),
                state: Some(state.to_string()),
            });
            placed += 1;
        }
    }
    Placed { objects, regions }
}

fn band_ok(target: Difficulty, max_d: f64) -> bool {
    Difficulty::from_distance(max_d) == target
}

/// Picks an ordered goal sequence whose maximum start distance lands in the
/// target band. Returns object indices.
fn pick_goals(
    objects: &[SceneObject],
    from_start: &[Option<f64>],
    pairwise: &[Vec<Option<f64>>],
    target: Difficulty,
    max_leg: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<usize>> {
    let mut tag_count: BTreeMap<&str, usize> = BTreeMap::new();
    for o in objects {
        *tag_count.entry(o.tag.as_str()).or_default() += 1;
    }
    let eligible: Vec<usize> = (0..objects.len())
        .filter(|&i| tag_count[objects[i].tag.as_str()] == 1)
        .filter(|&i| from_start[i].is_some_and(|d| d >= MIN_GOAL_FROM_START_M))
        .filter(|&i| target != Difficulty::Easy || from_start[i].is_some_and(|d| d <= EASY_MAX_M))
        .filter(|&i| target == Difficulty::Hard || from_start[i].is_some_and(|d| d <= MEDIUM_MAX_M))
        .collect();
    for _ in 0..200 {
        let want = rng.gen_range(MIN_GOALS..=MAX_GOALS);
        let mut seq: Vec<usize> = Vec::new();
        let mut max_d: f64 = 0.0;
        while seq.len() < want {
            let leg_ok = |j: usize| match seq.last() {
                None => from_start[j].is_some_and(|d| d <= max_leg),
                Some(&p) => pairwise[p][j].is_some_and(|d| d <= max_leg),
            };
            let cands: Vec<usize> = eligible
                .iter()
                .copied()
                .filter(|j| !seq.contains(j) && leg_ok(*j))
                .collect();
            if cands.is_empty() {
                break;
            }
            let need_far = match target {
                Difficulty::Easy => None,
                Difficulty::Medium => Some(EASY_MAX_M),
                Difficulty::Hard => Some(MEDIUM_MAX_M),
            };
            // move outward until the band threshold is crossed
            let pick = match need_far {
                Some(t) if max_d <= t && rng.gen_bool(0.7) => *cands
                    .iter()
                    .max_by(|a, b| from_start[**a].unwrap().total_cmp(&from_start[**b].unwrap()).then(b.cmp(a)))
                    .expect("non-empty"),
                _ => *cands.choose(rng).expect("non-empty"),
            };
            max_d = max_d.max(from_start[pick].unwrap_or(0.0));
            seq.push(pick);
        }
        if seq.len() >= MIN_GOALS && band_ok(target, max_d) {
            return Some(seq);
        }
    }
    None
}

fn choices_with(answer: &str, pool: &[String], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut distractors: Vec<&String> = pool.iter().filter(|p| p.as_str() != answer).collect();
    distractors.sort();
    distractors.dedup();
    distractors.shuffle(rng);
    let n = rng.gen_range(1..=4usize).min(distractors.len());
    let mut out: Vec<String> = distractors[..n].iter().map(|s| s.to_string()).collect();
    out.push(answer.to_string());
    out.shuffle(rng);
    out
}

fn make_question(
    goal: &SceneObject,
    goal_tags: &[&str],
    objects: &[SceneObject],
    regions: &[String],
    rng: &mut ChaCha8Rng,
) -> QaItem {
    let qtype = *QuestionType::ALL.choose(rng).expect("non-empty");
    let (question, answer, pool): (String, String, Vec<String>) = match qtype {
        QuestionType::Attribute => (
            format!("What color is the {}?", goal.tag),
            goal.color.clone().unwrap_or_default(),
            COLORS.iter().map(|s| s.to_string()).collect(),
        ),
        QuestionType::State => (
            format!("What state is the {} in?", goal.tag),
            goal.state.clone().unwrap_or_default(),
            STATES.iter().map(|s| s.to_string()).collect(),
        ),
        QuestionType::Location => (
            format!("Which room is the {} in?", goal.tag),
            goal.region.clone(),
            regions.to_vec(),
        ),
        QuestionType::Relationship => {
            let nearest = objects
                .iter()
                .filter(|o| o.tag != goal.tag)
                .min_by(|a, b| {
                    let da = (a.x - goal.x).hypot(a.y - goal.y);
                    let db = (b.x - goal.x).hypot(b.y - goal.y);
                    da.total_cmp(&db).then(a.tag.cmp(&b.tag))
                })
                .map(|o| o.tag.clone())
                .unwrap_or_default();
            (
                format!("Which object is closest to the {}?", goal.tag),
                nearest,
                objects.iter().filter(|o| o.tag != goal.tag).map(|o| o.tag.clone()).collect(),
            )
        }
        QuestionType::Counting => {
            let mut local: Vec<&str> = objects
                .iter()
                .filter(|o| o.region == goal.region && !goal_tags.contains(&o.tag.as_str()))
                .map(|o| o.tag.as_str())
                .collect();
            local.sort_unstable();
            local.dedup();
            let target = if local.is_empty() {
                let others: Vec<&str> = TAGS.iter().copied().filter(|t| !goal_tags.contains(t)).collect();
                *others.choose(rng).expect("non-empty")
            } else {
                *local.choose(rng).expect("non-empty")
            };
            let count = objects
                .iter()
                .filter(|o| o.region == goal.region && o.tag == target)
                .count();
            (
                format!("How many {target} items are in the same room as the {}?", goal.tag),
                count.to_string(),
                (0..=5).map(|n| n.to_string()).collect(),
            )
        }
    };
    let choice = rng.gen_bool(CHOICE_SHARE) && pool.iter().any(|p| *p != answer);
    QaItem {
        question,
        qtype,
        format: if choice { AnswerFormat::Choice } else { AnswerFormat::OpenEnded },
        choices: choice.then(|| choices_with(&answer, &pool, rng)),
        answer,
    }
}

/// Deterministic per-(seed, index) stream.
fn rng_for(seed: u64, index: usize) -> ChaCha8Rng {
    let mut key = seed.to_le_bytes().to_vec();
    key.extend_from_slice(&(index as u64).to_le_bytes());
    ChaCha8Rng::seed_from_u64(fnv1a64(&key))
}

/// Target band for the `index`-th task of a suite.
pub fn target_difficulty(index: usize) -> Difficulty {
    Difficulty::ALL[index % 3]
}

/// Generates one scene and task. Retries internally with fresh layouts until
/// a goal sequence in the target band exists.
pub fn generate(seed: u64, index: usize, cfg: &GenConfig) -> Result<(Scene, Task)> {
    cfg.validate()?;
    let mut rng = rng_for(seed, index);
    let target = target_difficulty(index);
    for _ in 0..50 {
        let mut layout = build_layout(cfg, &mut rng);
        place_obstacles(&mut layout, cfg, &mut rng);
        let reachable = main_component(&layout);
        let placed = place_objects(&layout, &reachable, cfg, &mut rng);
        if placed.objects.len() < MIN_GOALS + 1 {
            continue;
        }
        let occupied: Vec<Cell> = (0..layout.height)
            .flat_map(|r| (0..layout.width).map(move |c| (r, c)))
            .filter(|&(r, c)| layout.is_occ(r, c))
            .collect();
        let scene_id = format!("scene_{seed}_{index:03}");
        let scene = Scene::new(
            &scene_id,
            layout.width,
            layout.height,
            DEFAULT_CELL_SIZE,
            occupied,
            placed.objects.clone(),
        )?;

        // start: a reachable cell in a random room
        let room = layout.rooms[rng.gen_range(0..layout.rooms.len())];
        let Some(start_cell) = random_cell_in(&room, &mut rng) else { continue };
        if layout.is_occ(start_cell.0, start_cell.1) || !reachable[start_cell.0 * layout.width + start_cell.1] {
            continue;
        }
        let (sx, sy) = cell_center(start_cell);
        let start = Pose::new(sx, sy, 30.0 * rng.gen_range(0..12) as f64);

        let Some(start_field) = DistanceField::compute(&scene, start_cell) else { continue };
        let object_cells: Vec<Cell> = placed
            .objects
            .iter()
            .map(|o| scene.cell_of(o.x, o.y).expect("object inside grid"))
            .collect();
        let from_start: Vec<Option<f64>> = object_cells.iter().map(|c| start_field.distance(*c)).collect();
        let pairwise: Vec<Vec<Option<f64>>> = object_cells
            .iter()
            .map(|c| match DistanceField::compute(&scene, *c) {
                Some(f) => object_cells.iter().map(|d| f.distance(*d)).collect(),
                None => vec![None; object_cells.len()],
            })
            .collect();
        let Some(goals) = pick_goals(&placed.objects, &from_start, &pairwise, target, cfg.max_leg_m, &mut rng)
        else {
            continue;
        };

        let subtasks: Vec<Subtask> = goals
            .iter()
            .map(|&i| {
                let o = &placed.objects[i];
                Subtask {
                    goal_tag: o.tag.clone(),
                    goal_pose: o.pose(),
                    descriptor: format!(
                        "the {} {} in the {}",
                        o.color.as_deref().unwrap_or(""),
                        o.tag,
                        o.region
                    ),
                }
            })
            .collect();
        let goal_tags: Vec<&str> = subtasks.iter().map(|s| s.goal_tag.as_str()).collect();
        let questions: Vec<QaItem> = goals
            .iter()
            .map(|&i| make_question(&placed.objects[i], &goal_tags, &placed.objects, &placed.regions, &mut rng))
            .collect();
        let instruction = format!(
            "Find {}.",
            subtasks
                .iter()
                .map(|s| s.descriptor.clone())
                .collect::<Vec<_>>()
                .join(", then ")
        );
        let mut task = Task {
            id: format!("task_{seed}_{index:03}"),
            scene: scene_id.clone(),
            start,
            instruction,
            subtasks,
            questions,
            difficulty: None,
        };
        task.validate()?;
        task.difficulty = Some(classify_difficulty(&scene, &start, &task)?);
        return Ok((scene, task));
    }
    Err(Error::Contract(format!(
        "generator could not build a {} task for seed {seed}, index {index}",
        target.label()
    )))
}

/// `count` scene/task pairs for one seed.
pub fn generate_suite(seed: u64, count: usize, cfg: &GenConfig) -> Result<Vec<(Scene, Task)>> {
    if count == 0 {
        return Err(Error::OutOfRange("count must be at least 1".into()));
    }
    (0..count).map(|i| generate(seed, i, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::goal_distances;

    #[test]
    fn deterministic_per_seed() {
        let cfg = GenConfig::default();
        let (s1, t1) = generate(7, 0, &cfg).unwrap();
        let (s2, t2) = generate(7, 0, &cfg).unwrap();
        assert_eq!(s1.to_json(), s2.to_json());
        assert_eq!(t1.to_json(), t2.to_json());
        let (s3, _) = generate(8, 0, &cfg).unwrap();
        assert_ne!(s1.to_json(), s3.to_json());
    }

    #[test]
    fn suite_covers_all_bands_and_goal_counts() {
        let cfg = GenConfig::default();
        let suite = generate_suite(0, 9, &cfg).unwrap();
        let mut bands = std::collections::BTreeSet::new();
        for (i, (scene, task)) in suite.iter().enumerate() {
            assert!((2..=9).contains(&task.subtasks.len()));
            assert_eq!(task.difficulty, Some(target_difficulty(i)));
            bands.insert(task.difficulty.unwrap());
            let d = goal_distances(scene, &task.start, task).unwrap();
            assert!(d.iter().all(|x| *x >= MIN_GOAL_FROM_START_M));
            assert_eq!(task.questions.len(), task.subtasks.len());
            task.validate().unwrap();
            // round trip through JSON
            let back = Task::from_json(&task.to_json()).unwrap();
            assert_eq!(back.to_json(), task.to_json());
        }
        assert_eq!(bands.len(), 3);
    }

    #[test]
    fn rejects_bad_sizes() {
        let cfg = GenConfig { width_m: 2.0, ..Default::default() };
        assert!(generate(0, 0, &cfg).is_err());
        assert!(generate_suite(0, 0, &GenConfig::default()).is_err());
    }
}
