//! Episodic memory: feature embedding and the memory bank.

mod bank;
mod embed;

pub use bank::{
    similarity, InsertOutcome, MemoryBank, MemoryEntry, ObservationState, SimilarityWeights,
    DEFAULT_INSERT_INTERVAL, DEFAULT_NOVELTY_WINDOW,
};
pub use embed::{
    caption_for, embed, fnv1a64, observation_tokens, EmbeddingProvider, FeatureTable,
    HashingEmbedder, DEFAULT_DIM,
};

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
