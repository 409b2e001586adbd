//! Experiment configuration: one JSON file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use c3dm_core::fddp::{InferConfig, PolicyConfig, PolicyMode, TrainConfig};
use c3dm_core::scene::TaskConfig;
use c3dm_core::NoiseVariant;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label written to the `experiment` column of metrics.
    pub experiment: String,
    pub task: TaskConfig,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
    pub infer: InferConfig,
    pub n_demos: usize,
    pub n_eval_episodes: usize,
    /// Runs use seeds `seed .. seed + n_seeds`.
    pub seed: u64,
    pub n_seeds: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "desk".into(),
            task: TaskConfig::default(),
            policy: PolicyConfig::default(),
            train: TrainConfig {
                k: 2,
                batch_size: 10,
                epochs: 1000,
                lr: 1e-3,
                lr_final_frac: 0.1,
                ..TrainConfig::default()
            },
            infer: InferConfig::default(),
            n_demos: 30,
            n_eval_episodes: 50,
            seed: 0,
            n_seeds: 3,
            output_dir: PathBuf::from("runs"),
        }
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<PolicyMode>,
    pub n_steps: Option<usize>,
    pub n_demos: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// The file at `path` if given, else the defaults, with `overrides` applied.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, HarnessError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(mode) = o.mode {
            self.set_mode(mode);
        }
        if let Some(n) = o.n_steps {
            self.infer.n_steps = n;
        }
        if let Some(n) = o.n_demos {
            self.n_demos = n;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
    }

    pub fn set_mode(&mut self, mode: PolicyMode) {
        self.train.mode = mode;
        self.infer.mode = mode;
    }

    pub fn set_variant(&mut self, variant: NoiseVariant) {
        self.train.variant = variant;
        self.infer.variant = variant;
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_eval_episodes == 0 || self.n_seeds == 0 || self.n_demos == 0 {
            return Err(HarnessError::Config(
                "n_demos, n_eval_episodes and n_seeds must be at least 1".into(),
            ));
        }
        if self.train.mode != self.infer.mode {
            return Err(HarnessError::Config(format!(
                "train mode {} differs from inference mode {}",
                self.train.mode, self.infer.mode
            )));
        }
        if self.train.variant != self.infer.variant || self.train.schedule != self.infer.schedule {
            return Err(HarnessError::Config(
                "training and inference must share the noise variant and schedule".into(),
            ));
        }
        self.task.validate()?;
        self.train.validate()?;
        self.infer.validate(&c3dm_core::ActionLayout::desk())?;
        Ok(())
    }

    /// Policy shape with the image size taken from the task.
    pub fn policy_config(&self) -> PolicyConfig {
        let mut pc = self.policy.clone();
        pc.model.image_h = self.task.image_size;
        pc.model.image_w = self.task.image_size;
        pc
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.seed..self.seed + self.n_seeds as u64
    }

    /// Scene seeds of the training demos for run `seed`.
    pub fn demo_seeds(&self, seed: u64) -> Vec<u64> {
        (0..self.n_demos as u64)
            .map(|i| seed * 1_000_000 + i)
            .collect()
    }

    /// Scene seeds of the evaluation episodes for run `seed`; disjoint from
    /// every demo seed.
    pub fn eval_seeds(&self, seed: u64) -> Vec<u64> {
        (0..self.n_eval_episodes as u64)
            .map(|i| seed * 1_000_000 + 500_000 + i)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
