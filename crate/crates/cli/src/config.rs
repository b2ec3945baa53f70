use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use lazysp::grid::GridSpec;
use lazysp::training::{QLearningConfig, StrollConfig};

/// Run configuration, one table per module:
///
/// ```toml
/// [qlearning]
/// episodes = 3000
/// exploration_episodes = 100
/// epsilon0 = 1.0
/// discount = 1.0
/// learning_rate = 0.5
///
/// [stroll]
/// iterations = 10
/// episodes_per_iteration = 40
/// rollin = "oracle"
///
/// [grid]
/// width = 11
/// height = 11
/// obstacles = { kind = "onewall", gap_width = 2 }
///
/// [evaluate]
/// episodes = 200
/// selectors = ["forward", "backward", "postfailfast"]
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub qlearning: Option<QLearningConfig>,
    pub stroll: Option<StrollConfig>,
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub episodes: Option<usize>,
    pub selectors: Option<Vec<String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).context("config is not valid TOML")?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("config field `{path}`: {}", e.into_inner().message())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }
}
