//! The memory bank: entries of `(pose, text feature, observation feature)`,
//! weighted similarity, and novelty-gated insertion.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::sim::{View, VisibleObject};

use super::embed::{caption_for, EmbeddingProvider};

/// Minimum steps between two regular insertions.
pub const DEFAULT_INSERT_INTERVAL: usize = 10;
/// Number of recent entries the novelty threshold is computed over.
pub const DEFAULT_NOVELTY_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub text: f64,
    pub obs: f64,
    pub pos: f64,
    /// Length scale of the position kernel `exp(-d / lambda)`, meters.
    pub lambda: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        SimilarityWeights {
            text: 0.3,
            obs: 0.5,
            pos: 0.2,
            lambda: 5.0,
        }
    }
}

impl SimilarityWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.text, self.obs, self.pos]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
            && self.lambda.is_finite()
            && self.lambda > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!("similarity weights {self:?}")))
        }
    }

    pub fn scaled(&self, t: f64) -> SimilarityWeights {
        SimilarityWeights {
            text: self.text * t,
            obs: self.obs * t,
            pos: self.pos * t,
            lambda: self.lambda,
        }
    }
}

/// Current agent state as seen by the memory bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationState {
    pub pose: Pose,
    pub text_feat: Vec<f64>,
    pub obs_feat: Vec<f64>,
    pub caption: String,
    pub tags: Vec<VisibleObject>,
}

impl ObservationState {
    pub fn from_views(pose: Pose, views: &[View], embedder: &dyn EmbeddingProvider) -> Self {
        let caption = caption_for(views);
        ObservationState {
            pose,
            text_feat: embedder.embed_text(&caption),
            obs_feat: embedder.embed_observation(views),
            caption,
            tags: views.iter().flat_map(|v| v.visible.iter().cloned()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub index: usize,
    pub step: usize,
    pub pose: Pose,
    pub caption: String,
    pub tags: Vec<VisibleObject>,
    #[serde(rename = "f")]
    pub text_feat: Vec<f64>,
    #[serde(rename = "o")]
    pub obs_feat: Vec<f64>,
    pub goal_related: bool,
}

/// Dot product of two unit vectors. Bitwise-identical inputs return exactly
/// 1.0.
fn unit_dot(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        1.0
    } else {
        super::dot(a, b)
    }
}

/// `w_f * (f_c . f_i) + w_o * (o_c . o_i) + w_p * exp(-|p_c - p_i| / lambda)`.
pub fn similarity(
    cur: &ObservationState,
    entry: &MemoryEntry,
    w: &SimilarityWeights,
) -> Result<f64> {
    for (l, r) in [
        (cur.text_feat.len(), entry.text_feat.len()),
        (cur.obs_feat.len(), entry.obs_feat.len()),
    ] {
        if l != r {
            return Err(Error::DimensionMismatch { left: l, right: r });
        }
    }
    let d = cur.pose.distance(&entry.pose);
    Ok(w.text * unit_dot(&cur.text_feat, &entry.text_feat)
        + w.obs * unit_dot(&cur.obs_feat, &entry.obs_feat)
        + w.pos * (-d / w.lambda).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertOutcome {
    Inserted,
    SkippedInterval,
    RejectedRedundant,
}

#[derive(Debug, Clone, Default)]
pub struct MemoryBank {
    entries: Vec<MemoryEntry>,
    last_insert_step: Option<usize>,
    pub weights: SimilarityWeights,
}

impl MemoryBank {
    pub fn new(weights: SimilarityWeights) -> Self {
        MemoryBank {
            entries: Vec::new(),
            last_insert_step: None,
            weights,
        }
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_insert_step(&self) -> Option<usize> {
        self.last_insert_step
    }

    fn push(&mut self, cur: &ObservationState, step: usize, goal_related: bool) -> Result<usize> {
        if let Some(last) = self.entries.last() {
            if step < last.step {
                return Err(Error::Contract(format!(
                    "memory step {step} precedes last entry step {}",
                    last.step
                )));
            }
            if cur.text_feat.len() != last.text_feat.len() {
                return Err(Error::DimensionMismatch {
                    left: last.text_feat.len(),
                    right: cur.text_feat.len(),
                });
            }
        }
        let index = self.entries.len();
        self.entries.push(MemoryEntry {
            index,
            step,
            pose: cur.pose,
            caption: cur.caption.clone(),
            tags: cur.tags.clone(),
            text_feat: cur.text_feat.clone(),
            obs_feat: cur.obs_feat.clone(),
            goal_related,
        });
        Ok(index)
    }

    /// Similarity of `cur` against the `window` most recent entries, oldest
    /// first.
    pub fn recent_scores(&self, cur: &ObservationState, window: usize) -> Result<Vec<f64>> {
        let start = self.entries.len().saturating_sub(window);
        self.entries[start..]
            .iter()
            .map(|e| similarity(cur, e, &self.weights))
            .collect()
    }

    /// Inserts `cur` when at least `interval` steps passed since the last
    /// regular insertion and it is not redundant with the recent window:
    /// with `s*` the best recent score and `mu`, `sigma` the window mean and
    /// population standard deviation, the entry is kept iff `s* < mu + sigma`.
    /// Until the bank holds `window` entries every candidate is kept.
    pub fn maybe_insert(
        &mut self,
        cur: &ObservationState,
        step: usize,
        interval: usize,
        window: usize,
    ) -> Result<InsertOutcome> {
        if let Some(last) = self.last_insert_step {
            if step.saturating_sub(last) < interval {
                return Ok(InsertOutcome::SkippedInterval);
            }
        }
        if self.entries.len() >= window && window > 0 {
            let scores = self.recent_scores(cur, window)?;
            let (best, mean, std) = max_mean_std(&scores);
            if best >= mean + std {
                return Ok(InsertOutcome::RejectedRedundant);
            }
        }
        self.push(cur, step, false)?;
        self.last_insert_step = Some(step);
        Ok(InsertOutcome::Inserted)
    }

    /// Unconditional insertion of a goal-related observation. Does not reset
    /// the regular insertion interval.
    pub fn force_goal_memory(&mut self, cur: &ObservationState, step: usize) -> Result<usize> {
        self.push(cur, step, true)
    }

    /// The first `len` entries, as a new bank sharing these weights.
    pub fn prefix(&self, len: usize) -> MemoryBank {
        let entries: Vec<MemoryEntry> = self.entries[..len.min(self.entries.len())].to_vec();
        let last_insert_step = entries.iter().rev().find(|e| !e.goal_related).map(|e| e.step);
        MemoryBank {
            entries,
            last_insert_step,
            weights: self.weights,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R, weights: SimilarityWeights) -> Result<MemoryBank> {
        let mut bank = MemoryBank::new(weights);
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("memory jsonl", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: MemoryEntry = serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("memory line {}", n + 1), e))?;
            if entry.index != bank.entries.len() {
                return Err(Error::Contract(format!(
                    "memory line {} has index {}, expected {}",
                    n + 1,
                    entry.index,
                    bank.entries.len()
                )));
            }
            if bank.entries.last().is_some_and(|l| entry.step < l.step) {
                return Err(Error::Contract(format!(
                    "memory line {} steps backwards",
                    n + 1
                )));
            }
            if !entry.goal_related {
                bank.last_insert_step = Some(entry.step);
            }
            bank.entries.push(entry);
        }
        Ok(bank)
    }
}

/// Max, mean and population standard deviation. The mean is accumulated as
/// offsets from the first value so identical inputs give exactly that value
/// and a zero deviation.
fn max_mean_std(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let base = xs[0];
    let mean_off = xs.iter().map(|x| x - base).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - base - mean_off).powi(2)).sum::<f64>() / n;
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (max, base + mean_off, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{embed, HashingEmbedder};

    fn state(x: f64, tokens: &[&str]) -> ObservationState {
        let f = embed(tokens, 16);
        let mut obs_tokens: Vec<String> = tokens.iter().map(|t| format!("{t}_o")).collect();
        obs_tokens.push("obs".into());
        ObservationState {
            pose: Pose::new(x, 0.0, 0.0),
            text_feat: f,
            obs_feat: embed(&obs_tokens, 16),
            caption: tokens.join(" "),
            tags: vec![],
        }
    }

    fn entry_from(s: &ObservationState) -> MemoryEntry {
        MemoryEntry {
            index: 0,
            step: 0,
            pose: s.pose,
            caption: s.caption.clone(),
            tags: vec![],
            text_feat: s.text_feat.clone(),
            obs_feat: s.obs_feat.clone(),
            goal_related: false,
        }
    }

    fn basis(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn identical_entry_scores_weight_sum() {
        let s = state(1.0, &["sofa", "lamp"]);
        let w = SimilarityWeights::default();
        assert_eq!(similarity(&s, &entry_from(&s), &w).unwrap(), 1.0);
    }

    #[test]
    fn orthogonal_features_same_pose() {
        let mut cur = state(0.0, &["a"]);
        cur.text_feat = basis(4, 0);
        cur.obs_feat = basis(4, 1);
        let mut e = entry_from(&cur);
        e.text_feat = basis(4, 2);
        e.obs_feat = basis(4, 3);
        let s = similarity(&cur, &e, &SimilarityWeights::default()).unwrap();
        assert!((s - 0.2).abs() < 1e-15);
    }

    #[test]
    fn identical_features_at_lambda() {
        let cur = state(0.0, &["a", "b"]);
        let mut e = entry_from(&cur);
        e.pose = Pose::new(3.0, 4.0, 0.0);
        let s = similarity(&cur, &e, &SimilarityWeights::default()).unwrap();
        let expect = 0.8 + 0.2 * (-1.0f64).exp();
        assert!((s - expect).abs() < 1e-12);
        assert!((s - 0.87358).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch() {
        let cur = state(0.0, &["a"]);
        let mut e = entry_from(&cur);
        e.text_feat = vec![1.0, 0.0];
        assert!(matches!(
            similarity(&cur, &e, &SimilarityWeights::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn empty_bank_inserts() {
        let mut bank = MemoryBank::default();
        let out = bank.maybe_insert(&state(0.0, &["a"]), 0, 10, 10).unwrap();
        assert_eq!(out, InsertOutcome::Inserted);
        assert_eq!(bank.entries()[0].index, 0);
    }

    #[test]
    fn interval_not_elapsed_is_skipped() {
        let mut bank = MemoryBank::default();
        bank.maybe_insert(&state(0.0, &["a"]), 0, 10, 10).unwrap();
        assert_eq!(
            bank.maybe_insert(&state(5.0, &["b"]), 5, 10, 10).unwrap(),
            InsertOutcome::SkippedInterval
        );
        assert_eq!(
            bank.maybe_insert(&state(5.0, &["b"]), 10, 10, 10).unwrap(),
            InsertOutcome::Inserted
        );
    }

    #[test]
    fn exact_duplicates_are_rejected() {
        let mut bank = MemoryBank::default();
        let s = state(2.0, &["washer", "dryer"]);
        for i in 0..10 {
            assert_eq!(
                bank.maybe_insert(&s, i * 10, 10, 10).unwrap(),
                InsertOutcome::Inserted
            );
        }
        // brute force: all ten scores equal 1, so mean 1 and std 0
        let scores: Vec<f64> = bank
            .entries()
            .iter()
            .map(|e| similarity(&s, e, &bank.weights).unwrap())
            .collect();
        assert!(scores.iter().all(|x| *x == 1.0));
        assert_eq!(
            bank.maybe_insert(&s, 100, 10, 10).unwrap(),
            InsertOutcome::RejectedRedundant
        );
        assert_eq!(bank.len(), 10);
    }

    #[test]
    fn goal_memory_bypasses_checks() {
        let mut bank = MemoryBank::default();
        let s = state(2.0, &["washer"]);
        for i in 0..10 {
            bank.maybe_insert(&s, i * 10, 10, 10).unwrap();
        }
        assert_eq!(bank.maybe_insert(&s, 91, 10, 10).unwrap(), InsertOutcome::SkippedInterval);
        let idx = bank.force_goal_memory(&s, 91).unwrap();
        assert_eq!(idx, 10);
        assert!(bank.entries()[10].goal_related);
        assert_eq!(bank.last_insert_step(), Some(90));
    }

    #[test]
    fn goal_memories_on_empty_bank_and_in_order() {
        let mut bank = MemoryBank::default();
        let a = state(1.0, &["tv"]);
        let b = state(3.0, &["bed"]);
        assert_eq!(bank.force_goal_memory(&a, 4).unwrap(), 0);
        bank.maybe_insert(&state(2.0, &["x"]), 5, 10, 10).unwrap();
        assert_eq!(bank.force_goal_memory(&b, 9).unwrap(), 2);
        let goals: Vec<&str> = bank
            .entries()
            .iter()
            .filter(|e| e.goal_related)
            .map(|e| e.caption.as_str())
            .collect();
        assert_eq!(goals, ["tv", "bed"]);
    }

    #[test]
    fn backwards_step_is_rejected() {
        let mut bank = MemoryBank::default();
        bank.force_goal_memory(&state(0.0, &["a"]), 5).unwrap();
        assert!(bank.force_goal_memory(&state(0.0, &["a"]), 4).is_err());
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical() {
        let emb = HashingEmbedder::default();
        let mut bank = MemoryBank::default();
        for i in 0..15 {
            let mut s = ObservationState {
                pose: Pose::new(0.1 * i as f64, 0.37 * i as f64, 30.0 * i as f64),
                text_feat: emb.embed_text(&format!("item{i} chair")),
                obs_feat: emb.embed_text(&format!("obs{i}")),
                caption: format!("item{i} chair"),
                tags: vec![],
            };
            s.caption.push_str(" \"quoted\"");
            if i % 4 == 0 {
                bank.force_goal_memory(&s, i * 3).unwrap();
            } else {
                bank.maybe_insert(&s, i * 3, 1, 10).unwrap();
            }
        }
        let text = bank.to_jsonl();
        let back = MemoryBank::read_jsonl(text.as_bytes(), bank.weights).unwrap();
        assert_eq!(back.entries(), bank.entries());
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn stats_of_identical_values_are_exact() {
        let xs = [0.1 + 0.2; 10];
        let (m, mu, sd) = max_mean_std(&xs);
        assert_eq!(m, mu);
        assert_eq!(sd, 0.0);
    }
}
