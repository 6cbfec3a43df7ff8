//! Run configuration, optionally loaded from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::strategy::StrategyKind;

pub const DEFAULT_STEPS: u64 = 2000;
pub const DEFAULT_RUNS: usize = 10;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Discrete,
    Continuum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Entrants per step.
    pub n: usize,
    /// Lifetime `T`.
    #[serde(rename = "T")]
    pub lifetime: u32,
    pub steps: u64,
    pub strategy: StrategyKind,
    /// Base seed; run `i` of a batch uses `seed + i`.
    pub seed: u64,
    pub runs: usize,
    pub model: ModelKind,
    pub output_dir: Option<PathBuf>,
    /// Write one time-series CSV per run.
    pub timeseries: bool,
}

impl RunConfig {
    pub fn new(n: usize, lifetime: u32, strategy: StrategyKind) -> Self {
        RunConfig {
            n,
            lifetime,
            steps: DEFAULT_STEPS,
            strategy,
            seed: DEFAULT_SEED,
            runs: DEFAULT_RUNS,
            model: ModelKind::Discrete,
            output_dir: None,
            timeseries: false,
        }
    }

    pub fn with_steps(mut self, steps: u64) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lifetime < 4 {
            return Err(Error::invalid(format!(
                "T must be >= 4, got {}",
                self.lifetime
            )));
        }
        if self.steps < 1 {
            return Err(Error::invalid("steps must be >= 1"));
        }
        if self.runs < 1 {
            return Err(Error::invalid("runs must be >= 1"));
        }
        Ok(())
    }

    pub fn market_params(&self) -> MarketParams {
        MarketParams {
            n: self.n,
            lifetime: self.lifetime,
            strategy: self.strategy,
        }
    }

    /// Seeds of a batch, in run order.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64)
            .map(|i| self.seed.wrapping_add(i))
            .collect()
    }
}

/// Partial configuration as read from a file; every key is optional and
/// unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n: Option<usize>,
    #[serde(rename = "T")]
    pub lifetime: Option<u32>,
    pub steps: Option<u64>,
    pub strategy: Option<StrategyKind>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub model: Option<ModelKind>,
    pub output_dir: Option<PathBuf>,
    pub timeseries: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|message| Error::Config {
            path: path.to_owned(),
            message,
        })
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Keys set in `top` win over keys set in `self`.
    pub fn overlay(self, top: ConfigFile) -> ConfigFile {
        ConfigFile {
            n: top.n.or(self.n),
            lifetime: top.lifetime.or(self.lifetime),
            steps: top.steps.or(self.steps),
            strategy: top.strategy.or(self.strategy),
            seed: top.seed.or(self.seed),
            runs: top.runs.or(self.runs),
            model: top.model.or(self.model),
            output_dir: top.output_dir.or(self.output_dir),
            timeseries: top.timeseries.or(self.timeseries),
        }
    }

    /// Fills unset keys with defaults and validates. `n` and `T` are required.
    pub fn resolve(self) -> Result<RunConfig> {
        let n = self
            .n
            .ok_or_else(|| Error::invalid("missing required value: n"))?;
        let lifetime = self
            .lifetime
            .ok_or_else(|| Error::invalid("missing required value: T"))?;
        let mut c = RunConfig::new(
            n,
            lifetime,
            self.strategy.unwrap_or(StrategyKind::ModifiedReasonable),
        );
        if let Some(s) = self.steps {
            c.steps = s;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(r) = self.runs {
            c.runs = r;
        }
        if let Some(m) = self.model {
            c.model = m;
        }
        c.output_dir = self.output_dir;
        c.timeseries = self.timeseries.unwrap_or(false);
        c.validate()?;
        Ok(c)
    }
}
