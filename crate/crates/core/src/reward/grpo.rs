//! Group-relative advantage normalization.

use crate::error::{Error, Result};

/// KL penalty coefficient exported for downstream trainers.
pub const KL_COEFFICIENT: f64 = 0.1;
pub const ADVANTAGE_EPS: f64 = 1e-8;

/// `A_i = (r_i - mean) / (std + eps)` with the population standard deviation.
pub fn group_relative_advantages(rewards: &[f64], eps: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::OutOfRange(format!(
            "group size must be at least 2, got {}",
            rewards.len()
        )));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + eps;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}
