//! Experiment configuration: a versioned TOML document. Unknown keys are
//! rejected so that a typo cannot silently change an experiment.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use semithick::anosov::ModelParams;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub run: RunConfig,
}

/// Sample counts, caps and the RNG seed of the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Approximate number of points of the verification grid.
    pub grid: usize,
    pub basin_samples: u64,
    pub basin_ladder: Vec<u64>,
    /// Cap on iterations when waiting for an exit from `UK`.
    pub t_cap: u64,
    pub rectangles: usize,
    pub mc_points: usize,
    pub frequency_steps: usize,
    pub word_length: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            grid: 1_000_000,
            basin_samples: 1_000_000,
            basin_ladder: vec![0, 4, 16, 64, 256],
            t_cap: semithick::dynamics::T_CAP,
            rectangles: 100,
            mc_points: 100_000,
            frequency_steps: 1_000_000,
            word_length: 5,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            model: ModelParams::default(),
            run: RunConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).context("invalid configuration")?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Every field is checked against the precondition of its consumer.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("configuration version {} is not supported (expected {CONFIG_VERSION})", self.version);
        }
        self.model.validate()?;
        let r = &self.run;
        if r.grid == 0 || r.basin_samples == 0 || r.mc_points == 0 || r.rectangles == 0 || r.frequency_steps == 0 {
            bail!("grid, basin_samples, rectangles, mc_points and frequency_steps must be positive");
        }
        if r.basin_ladder.is_empty() {
            bail!("basin_ladder must not be empty");
        }
        if r.word_length == 0 || r.word_length > 16 || r.word_length > r.frequency_steps {
            bail!("word_length must lie in 1..=16 and not exceed frequency_steps");
        }
        Ok(())
    }
}
