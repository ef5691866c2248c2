//! The memory-retrieval tool: query embedding, per-channel top-k and result
//! combination, plus the one-call-per-step tool contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{dot, EmbeddingProvider, MemoryBank, MemoryEntry};
use crate::reward::AgentResponse;

pub const DEFAULT_TOPK: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Text,
    Obs,
}

/// How the per-channel candidate lists are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineRule {
    /// Union ranked by the better of the two channel scores.
    #[default]
    MaxScore,
    /// Union ranked by the sum of both channel scores.
    Sum,
    /// Alternate text and observation ranks, skipping repeats.
    Interleave,
}

/// Whether channels are ranked separately before combining, or scored
/// jointly (mean of both cosines) in a single ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    #[default]
    Separate,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub topk: usize,
    pub combine: CombineRule,
    pub mode: ChannelMode,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            topk: DEFAULT_TOPK,
            combine: CombineRule::MaxScore,
            mode: ChannelMode::Separate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedMemory {
    pub entry: MemoryEntry,
    pub channel: Channel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalResult {
    pub entries: Vec<RetrievedMemory>,
}

impl RetrievalResult {
    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|m| m.entry.index).collect()
    }
}

#[derive(Clone, Copy)]
struct Scored {
    index: usize,
    text: f64,
    obs: f64,
}

fn rank_desc(items: &mut [(usize, f64)]) {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Retrieves up to `cfg.topk` memories for `query`.
pub fn retrieve(
    bank: &MemoryBank,
    query: &str,
    embedder: &dyn EmbeddingProvider,
    cfg: &RetrievalConfig,
) -> Result<RetrievalResult> {
    if query.trim().is_empty() {
        return Err(Error::Empty("query"));
    }
    if bank.is_empty() {
        return Err(Error::Empty("memory bank"));
    }
    let fq = embedder.embed_text(query);
    let entries = bank.entries();
    let scored: Vec<Scored> = entries
        .iter()
        .map(|e| {
            if e.text_feat.len() != fq.len() || e.obs_feat.len() != fq.len() {
                return Err(Error::DimensionMismatch {
                    left: fq.len(),
                    right: e.text_feat.len(),
                });
            }
            Ok(Scored {
                index: e.index,
                text: dot(&fq, &e.text_feat),
                obs: dot(&fq, &e.obs_feat),
            })
        })
        .collect::<Result<_>>()?;
    let k = cfg.topk;

    let picked: Vec<(usize, Channel, f64)> = match cfg.mode {
        ChannelMode::Joint => {
            let mut joint: Vec<(usize, f64)> = scored
                .iter()
                .map(|s| (s.index, 0.5 * (s.text + s.obs)))
                .collect();
            rank_desc(&mut joint);
            joint
                .into_iter()
                .take(k)
                .map(|(i, s)| {
                    let sc = scored[i];
                    let ch = if sc.obs > sc.text { Channel::Obs } else { Channel::Text };
                    (i, ch, s)
                })
                .collect()
        }
        ChannelMode::Separate => {
            let mut by_text: Vec<(usize, f64)> = scored.iter().map(|s| (s.index, s.text)).collect();
            let mut by_obs: Vec<(usize, f64)> = scored.iter().map(|s| (s.index, s.obs)).collect();
            rank_desc(&mut by_text);
            rank_desc(&mut by_obs);
            by_text.truncate(k);
            by_obs.truncate(k);
            combine(&scored, &by_text, &by_obs, cfg.combine, k)
        }
    };

    Ok(RetrievalResult {
        entries: picked
            .into_iter()
            .map(|(i, channel, score)| RetrievedMemory {
                entry: entries[i].clone(),
                channel,
                score,
            })
            .collect(),
    })
}

fn combine(
    scored: &[Scored],
    by_text: &[(usize, f64)],
    by_obs: &[(usize, f64)],
    rule: CombineRule,
    k: usize,
) -> Vec<(usize, Channel, f64)> {
    let best = |i: usize| {
        let s = scored[i];
        if s.obs > s.text {
            (Channel::Obs, s.obs)
        } else {
            (Channel::Text, s.text)
        }
    };
    if rule == CombineRule::Interleave {
        let mut out: Vec<(usize, Channel, f64)> = Vec::new();
        let n = by_text.len().max(by_obs.len());
        for r in 0..n {
            for (list, ch) in [(by_text, Channel::Text), (by_obs, Channel::Obs)] {
                if let Some(&(i, s)) = list.get(r) {
                    if out.len() < k && !out.iter().any(|o| o.0 == i) {
                        out.push((i, ch, s));
                    }
                }
            }
        }
        return out;
    }
    let mut union: Vec<usize> = by_text.iter().chain(by_obs).map(|p| p.0).collect();
    union.sort_unstable();
    union.dedup();
    let mut ranked: Vec<(usize, f64)> = union
        .iter()
        .map(|&i| match rule {
            CombineRule::Sum => (i, scored[i].text + scored[i].obs),
            _ => (i, best(i).1),
        })
        .collect();
    rank_desc(&mut ranked);
    ranked
        .into_iter()
        .take(k)
        .map(|(i, s)| (i, best(i).0, s))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolFailure {
    NoToolCall,
    MalformedCall,
    EmptyQuery,
    EmptyMemory,
    RoundLimit,
}

impl std::fmt::Display for ToolFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ToolFailure::NoToolCall => "no tool call in response",
            ToolFailure::MalformedCall => "malformed tool call",
            ToolFailure::EmptyQuery => "empty query",
            ToolFailure::EmptyMemory => "memory bank is empty",
            ToolFailure::RoundLimit => "only one tool call is allowed per step",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ToolOutcome {
    Ok(RetrievalResult),
    Failed(ToolFailure),
}

/// Serves tool calls for a single decision step; a second call is refused.
pub struct ToolSession<'a> {
    bank: &'a MemoryBank,
    embedder: &'a dyn EmbeddingProvider,
    cfg: RetrievalConfig,
    calls: usize,
}

impl<'a> ToolSession<'a> {
    pub fn new(
        bank: &'a MemoryBank,
        embedder: &'a dyn EmbeddingProvider,
        cfg: RetrievalConfig,
    ) -> Self {
        ToolSession {
            bank,
            embedder,
            cfg,
            calls: 0,
        }
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn handle(&mut self, response: &AgentResponse) -> ToolOutcome {
        if response.tool_call.is_none() && !response.tool_call_malformed {
            return ToolOutcome::Failed(ToolFailure::NoToolCall);
        }
        self.calls += 1;
        if self.calls > 1 {
            return ToolOutcome::Failed(ToolFailure::RoundLimit);
        }
        handle_tool_call(self.bank, response, self.embedder, &self.cfg)
    }
}

/// Resolves a first-round response into retrieved memories or a failure.
pub fn handle_tool_call(
    bank: &MemoryBank,
    response: &AgentResponse,
    embedder: &dyn EmbeddingProvider,
    cfg: &RetrievalConfig,
) -> ToolOutcome {
    let Some(call) = &response.tool_call else {
        return ToolOutcome::Failed(if response.tool_call_malformed {
            ToolFailure::MalformedCall
        } else {
            ToolFailure::NoToolCall
        });
    };
    if call.query.trim().is_empty() {
        return ToolOutcome::Failed(ToolFailure::EmptyQuery);
    }
    if bank.is_empty() {
        return ToolOutcome::Failed(ToolFailure::EmptyMemory);
    }
    match retrieve(bank, &call.query, embedder, cfg) {
        Ok(r) => ToolOutcome::Ok(r),
        Err(_) => ToolOutcome::Failed(ToolFailure::MalformedCall),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::memory::{HashingEmbedder, ObservationState};
    use crate::reward::parse_response;

    fn bank_of(captions: &[&str]) -> MemoryBank {
        let emb = HashingEmbedder::default();
        let mut bank = MemoryBank::default();
        for (i, c) in captions.iter().enumerate() {
            let s = ObservationState {
                pose: Pose::new(i as f64, 0.0, 0.0),
                text_feat: emb.embed_text(c),
                obs_feat: emb.embed_text(&format!("{c} view")),
                caption: c.to_string(),
                tags: vec![],
            };
            bank.force_goal_memory(&s, i).unwrap();
        }
        bank
    }

    fn brute_force(bank: &MemoryBank, query: &str, k: usize) -> Vec<usize> {
        let q = HashingEmbedder::default().embed_text(query);
        let mut all: Vec<(usize, f64)> = bank
            .entries()
            .iter()
            .map(|e| {
                let t: f64 = q.iter().zip(&e.text_feat).map(|(a, b)| a * b).sum();
                let o: f64 = q.iter().zip(&e.obs_feat).map(|(a, b)| a * b).sum();
                (e.index, t.max(o))
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.into_iter().take(k).map(|p| p.0).collect()
    }

    #[test]
    fn matches_brute_force_top3() {
        let bank = bank_of(&[
            "red sofa in livingroom",
            "washing machine door closed",
            "sofa",
            "lamp on desk",
            "green sofa cushion and lamp",
        ]);
        let emb = HashingEmbedder::default();
        let r = retrieve(&bank, "sofa lamp", &emb, &RetrievalConfig::default()).unwrap();
        assert_eq!(r.indices(), brute_force(&bank, "sofa lamp", 3));
        assert_eq!(r.entries.len(), 3);
        assert!(r.entries.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn topk_larger_than_bank_returns_everything_sorted() {
        let bank = bank_of(&["a b", "b c", "c d"]);
        let cfg = RetrievalConfig {
            topk: 10,
            ..Default::default()
        };
        let r = retrieve(&bank, "b", &HashingEmbedder::default(), &cfg).unwrap();
        assert_eq!(r.entries.len(), 3);
        assert_eq!(r.indices(), brute_force(&bank, "b", 10));
    }

    #[test]
    fn ties_prefer_lower_index() {
        let bank = bank_of(&["chair", "chair", "table"]);
        let r = retrieve(&bank, "chair", &HashingEmbedder::default(), &RetrievalConfig::default())
            .unwrap();
        assert_eq!(r.entries[0].entry.index, 0);
        assert_eq!(r.entries[1].entry.index, 1);
        assert_eq!(r.entries[0].score, r.entries[1].score);
    }

    #[test]
    fn errors_on_empty_inputs() {
        let emb = HashingEmbedder::default();
        assert!(matches!(
            retrieve(&MemoryBank::default(), "x", &emb, &RetrievalConfig::default()),
            Err(Error::Empty("memory bank"))
        ));
        assert!(matches!(
            retrieve(&bank_of(&["a"]), "  ", &emb, &RetrievalConfig::default()),
            Err(Error::Empty("query"))
        ));
    }

    #[test]
    fn alternative_combinations_stay_within_topk() {
        let bank = bank_of(&["a b", "b c", "c d", "d e", "a e", "b d"]);
        let emb = HashingEmbedder::default();
        for combine in [CombineRule::Sum, CombineRule::Interleave] {
            let cfg = RetrievalConfig {
                combine,
                ..Default::default()
            };
            let r = retrieve(&bank, "b d", &emb, &cfg).unwrap();
            assert!(r.entries.len() <= 3);
            let mut idx = r.indices();
            idx.sort();
            idx.dedup();
            assert_eq!(idx.len(), r.entries.len());
        }
        let joint = RetrievalConfig {
            mode: ChannelMode::Joint,
            ..Default::default()
        };
        assert_eq!(retrieve(&bank, "b d", &emb, &joint).unwrap().entries.len(), 3);
    }

    #[test]
    fn tool_call_outcomes() {
        let emb = HashingEmbedder::default();
        let cfg = RetrievalConfig::default();
        let bank = bank_of(&["dryer", "christmas tree", "nightstand", "dryer door open"]);
        let call = parse_response(r#"{"tool_call":{"query":"dryer door"}}"#);
        match handle_tool_call(&bank, &call, &emb, &cfg) {
            ToolOutcome::Ok(r) => assert!(!r.entries.is_empty() && r.entries.len() <= 3),
            other => panic!("{other:?}"),
        }
        let plain = parse_response("ACTION: forward FRONTIER: 1 ANSWER: A");
        assert_eq!(
            handle_tool_call(&bank, &plain, &emb, &cfg),
            ToolOutcome::Failed(ToolFailure::NoToolCall)
        );
        assert_eq!(
            handle_tool_call(&MemoryBank::default(), &call, &emb, &cfg),
            ToolOutcome::Failed(ToolFailure::EmptyMemory)
        );
        let empty = parse_response(r#"{"tool_call":{"query":"  "}}"#);
        assert_eq!(
            handle_tool_call(&bank, &empty, &emb, &cfg),
            ToolOutcome::Failed(ToolFailure::EmptyQuery)
        );
        let bad = parse_response(r#"{"tool_call":{"q":1}}"#);
        assert_eq!(
            handle_tool_call(&bank, &bad, &emb, &cfg),
            ToolOutcome::Failed(ToolFailure::MalformedCall)
        );
    }

    #[test]
    fn second_call_in_a_step_is_refused() {
        let emb = HashingEmbedder::default();
        let bank = bank_of(&["dryer"]);
        let mut session = ToolSession::new(&bank, &emb, RetrievalConfig::default());
        let call = parse_response(r#"{"tool_call":{"query":"dryer"}}"#);
        assert!(matches!(session.handle(&call), ToolOutcome::Ok(_)));
        assert_eq!(session.handle(&call), ToolOutcome::Failed(ToolFailure::RoundLimit));
    }
}
