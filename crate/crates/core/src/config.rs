//! Run configuration shared by the command-line entry points.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GenConfig;
use crate::pipeline::PipelineConfig;
use crate::reward::RewardConfig;
use crate::sim::EpisodeConfig;

/// Environment variable naming a JSON file that overrides [`RunConfig`]
/// defaults.
pub const CONFIG_ENV: &str = "EXPLOREBENCH_CONFIG";

/// Top-level sections missing from a config file keep their defaults; a
/// section that is present replaces the default section as a whole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub count: usize,
    pub generator: GenConfig,
    pub policy: String,
    /// Program and arguments for the `external` policy.
    pub endpoint: Vec<String>,
    pub timeout_ms: u64,
    pub episode: EpisodeConfig,
    pub reward: RewardConfig,
    pub pipeline: PipelineConfig,
    pub embedding_dim: usize,
    pub features: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            count: 20,
            generator: GenConfig::default(),
            policy: "greedy".into(),
            endpoint: vec![],
            timeout_ms: 30_000,
            episode: EpisodeConfig::default(),
            reward: RewardConfig::default(),
            pipeline: PipelineConfig::default(),
            embedding_dim: crate::memory::DEFAULT_DIM,
            features: None,
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::json("run config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?;
        RunConfig::from_json(&text)
    }

    /// Defaults, or the file named by [`CONFIG_ENV`] when it is set.
    pub fn from_env() -> Result<RunConfig> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => RunConfig::load(PathBuf::from(p)),
            _ => Ok(RunConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.episode.similarity.validate()?;
        if self.count == 0 {
            return Err(Error::OutOfRange("count must be at least 1".into()));
        }
        if self.episode.budget_per_subtask == 0 {
            return Err(Error::OutOfRange("budget must be at least 1".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::OutOfRange("embedding_dim must be at least 1".into()));
        }
        if self.pipeline.window == 0 || self.pipeline.max_distinct_actions == 0 {
            return Err(Error::OutOfRange("pipeline window and distinct-action limit must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
