//! Config-file handling. One JSON file covers training, sweep planning
//! and toy-corpus generation; command-line flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use dialog_core::toy::ToyConfig;
use dialog_core::training::{TrainMode, TrainingConfig};
use dialog_core::{Error, Result};

pub const DEFAULT_FRACTIONS: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub modes: Vec<TrainMode>,
    /// Sorted ascending, all in [0, 1].
    pub fractions: Vec<f64>,
    /// Unique.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            modes: vec![TrainMode::Baseline, TrainMode::Pseudo, TrainMode::Pi],
            fractions: DEFAULT_FRACTIONS.to_vec(),
            seeds: (0..10).collect(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() || self.fractions.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "sweep plan needs at least one mode, fraction and seed".into(),
            ));
        }
        if self
            .fractions
            .windows(2)
            .any(|w| w[0] >= w[1])
            || self.fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        {
            return Err(Error::Config(
                "fractions must be strictly ascending within [0, 1]".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        if !self.seeds.iter().all(|s| seen.insert(*s)) {
            return Err(Error::Config("seeds must be unique".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    pub training: TrainingConfig,
    pub plan: ExperimentPlan,
    pub toy: ToyConfig,
    /// Seed of the generated corpus (independent of training seeds).
    pub toy_seed: u64,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: CliConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }
}

/// Flag values that override the config file when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<TrainMode>,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
    pub nu: Option<f64>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut TrainingConfig) {
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(f) = self.fraction {
            cfg.labelled_fraction = f;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(nu) = self.nu {
            cfg.nu = nu;
        }
        if let Some(sigma) = self.sigma {
            cfg.sigma = sigma;
        }
        if let Some(alpha) = self.alpha {
            cfg.alpha = alpha;
        }
    }
}

pub fn parse_mode(s: &str) -> Result<TrainMode> {
    match s {
        "baseline" => Ok(TrainMode::Baseline),
        "pseudo" => Ok(TrainMode::Pseudo),
        "pi" => Ok(TrainMode::Pi),
        other => Err(Error::Config(format!(
            "unknown mode '{other}' (expected baseline, pseudo or pi)"
        ))),
    }
}
