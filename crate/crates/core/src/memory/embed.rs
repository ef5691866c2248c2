//! Deterministic feature hashing, plus a lookup table for precomputed
//! features.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::View;

use super::tokenize;

pub const DEFAULT_DIM: usize = 64;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing into `dim` buckets followed by L2 normalization.
/// The top hash bit picks the sign. Empty or fully cancelled input maps to
/// the first basis vector.
pub fn embed<S: AsRef<str>>(tokens: &[S], dim: usize) -> Vec<f64> {
    assert!(dim >= 2, "embedding dimension must be at least 2");
    let mut v = vec![0.0; dim];
    for t in tokens {
        let h = fnv1a64(t.as_ref().as_bytes());
        let idx = (h % dim as u64) as usize;
        v[idx] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Tokens describing what the views show: tags, tag-per-side, attributes and
/// a coarse distance bucket.
pub fn observation_tokens(views: &[View]) -> Vec<String> {
    let mut out = Vec::new();
    for view in views {
        let side = view.side_name();
        for obj in &view.visible {
            out.push(obj.tag.clone());
            out.push(format!("{}_{}", obj.tag, side));
            out.push(format!("{}_d{}", obj.tag, obj.distance.floor() as i64));
            if let Some(c) = &obj.color {
                out.push(format!("{}_{}", c, obj.tag));
            }
            if let Some(s) = &obj.state {
                out.push(format!("{}_{}", obj.tag, s));
            }
        }
    }
    out
}

/// Short textual description of the views, as an image tagger would emit.
pub fn caption_for(views: &[View]) -> String {
    let mut parts = Vec::new();
    for view in views {
        for obj in &view.visible {
            let mut s = String::new();
            if let Some(c) = &obj.color {
                s.push_str(c);
                s.push(' ');
            }
            s.push_str(&obj.tag);
            if let Some(st) = &obj.state {
                s.push_str(&format!(" ({st})"));
            }
            s.push_str(&format!(" in {}", obj.region));
            parts.push(s);
        }
    }
    if parts.is_empty() {
        "nothing visible".to_string()
    } else {
        parts.join("; ")
    }
}

/// Source of text and observation features.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Vec<f64>;
    fn embed_observation(&self, views: &[View]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dim: DEFAULT_DIM }
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Vec<f64> {
        embed(&tokenize(text), self.dim)
    }

    fn embed_observation(&self, views: &[View]) -> Vec<f64> {
        embed(&observation_tokens(views), self.dim)
    }
}

/// Precomputed features keyed by id: captions/queries for text, and the
/// space-joined observation tokens for observations. Misses fall back to
/// hashing.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    vectors: BTreeMap<String, Vec<f64>>,
    fallback: HashingEmbedder,
}

impl FeatureTable {
    pub fn from_map(vectors: BTreeMap<String, Vec<f64>>) -> Result<FeatureTable> {
        let mut dim = None;
        let mut normalized = BTreeMap::new();
        for (id, v) in vectors {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::DimensionMismatch {
                        left: d,
                        right: v.len(),
                    })
                }
                _ => {}
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::OutOfRange(format!("feature `{id}` has zero norm")));
            }
            normalized.insert(id, v.iter().map(|x| x / norm).collect());
        }
        let dim = dim.ok_or(Error::Empty("feature table"))?;
        if dim < 2 {
            return Err(Error::OutOfRange("feature dimension must be >= 2".into()));
        }
        Ok(FeatureTable {
            vectors: normalized,
            fallback: HashingEmbedder { dim },
        })
    }

    pub fn from_json(text: &str) -> Result<FeatureTable> {
        let map: BTreeMap<String, Vec<f64>> =
            serde_json::from_str(text).map_err(|e| Error::json("feature file", e))?;
        FeatureTable::from_map(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FeatureTable> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        FeatureTable::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for FeatureTable {
    fn dim(&self) -> usize {
        self.fallback.dim
    }

    fn embed_text(&self, text: &str) -> Vec<f64> {
        match self.vectors.get(text) {
            Some(v) => v.clone(),
            None => self.fallback.embed_text(text),
        }
    }

    fn embed_observation(&self, views: &[View]) -> Vec<f64> {
        let tokens = observation_tokens(views);
        match self.vectors.get(&tokens.join(" ")) {
            Some(v) => v.clone(),
            None => embed(&tokens, self.fallback.dim),
        }
    }
}
