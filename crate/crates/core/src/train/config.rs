use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{Block, PipelineConfig};

pub const TRAIN_CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd { momentum: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    /// Cosine decay from the base rate to `base · min_factor` over a phase.
    Cosine { min_factor: f64 },
}

impl Schedule {
    pub fn rate(&self, base: f64, step: usize, total: usize) -> f64 {
        match *self {
            Schedule::Constant => base,
            Schedule::Cosine { min_factor } => {
                let p = if total <= 1 { 0.0 } else { step as f64 / (total - 1) as f64 };
                let f = min_factor + (1.0 - min_factor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos());
                base * f
            }
        }
    }
}

/// Epoch counts for supervised pretraining of each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub lr: f64,
    /// Rate for the deep baseline head, which diverges at `lr`.
    #[serde(default = "default_baseline_lr")]
    pub baseline_lr: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub stage3_epochs: usize,
    pub classifier_epochs: usize,
    pub baseline_epochs: usize,
}

fn default_baseline_lr() -> f64 {
    1e-4
}

impl PretrainConfig {
    pub fn lr(&self, block: Block) -> f64 {
        match block {
            Block::Baseline => self.baseline_lr,
            _ => self.lr,
        }
    }

    pub fn epochs(&self, block: Block) -> usize {
        match block {
            Block::Stage1 => self.stage1_epochs,
            Block::Stage2 => self.stage2_epochs,
            Block::Stage3 => self.stage3_epochs,
            Block::Classifier => self.classifier_epochs,
            Block::Baseline => self.baseline_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub epochs_per_phase: usize,
    /// Blocks to fine-tune, in order.
    pub phases: Vec<String>,
    /// Restore a phase's starting parameters when the phase lowers the
    /// training-set success rate.
    #[serde(default = "default_true")]
    pub revert_on_regression: bool,
}

fn default_true() -> bool {
    true
}

/// Everything that determines a training run. Stored as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub format_version: u32,
    pub seed: u64,
    pub batch_size: usize,
    /// Clip the global gradient norm to this value; 0 disables clipping.
    pub grad_clip: f64,
    pub optimizer: Optimizer,
    pub schedule: Schedule,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    /// White background patches added to the training data.
    pub background_patches: usize,
    /// Fraction of source images used for training; 1 trains on everything.
    pub train_ratio: f64,
    pub split_seed: u64,
    pub model: PipelineConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            format_version: TRAIN_CONFIG_VERSION,
            seed: 0,
            batch_size: 16,
            grad_clip: 10.0,
            optimizer: Optimizer::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            schedule: Schedule::Constant,
            pretrain: PretrainConfig {
                lr: 1e-3,
                baseline_lr: default_baseline_lr(),
                stage1_epochs: 30,
                stage2_epochs: 30,
                stage3_epochs: 30,
                classifier_epochs: 30,
                baseline_epochs: 0,
            },
            finetune: FinetuneConfig {
                lr: 1e-4,
                epochs_per_phase: 5,
                phases: ["classifier", "stage3", "stage2", "stage1"].map(String::from).to_vec(),
                revert_on_regression: true,
            },
            background_patches: 16,
            train_ratio: 0.8,
            split_seed: 0,
            model: PipelineConfig::default(),
        }
    }
}

/// Parses a comma-separated fine-tuning phase list; empty means none.
pub fn parse_phases(list: &str) -> Result<Vec<Block>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(finetune_block)
        .collect()
}

pub(crate) fn finetune_block(name: &str) -> Result<Block> {
    match name.parse::<Block>()? {
        Block::Baseline => Err(Error::Config(
            "the baseline head is not part of the detection chain and cannot be fine-tuned".into(),
        )),
        b => Ok(b),
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn finetune_phases(&self) -> Result<Vec<Block>> {
        self.finetune.phases.iter().map(|p| finetune_block(p)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != TRAIN_CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config format_version {} is not supported (expected {TRAIN_CONFIG_VERSION})",
                self.format_version
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let rates = [self.pretrain.lr, self.pretrain.baseline_lr, self.finetune.lr, self.grad_clip];
        if rates.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("learning rates and grad_clip must be finite and non-negative".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio <= 1.0) {
            return Err(Error::Config(format!("train_ratio {} must lie in (0, 1]", self.train_ratio)));
        }
        if let Schedule::Cosine { min_factor } = self.schedule {
            if !(0.0..=1.0).contains(&min_factor) {
                return Err(Error::Config("cosine min_factor must lie in [0, 1]".into()));
            }
        }
        self.finetune_phases()?;
        if self.pretrain.baseline_epochs > 0 && self.model.baseline.is_none() {
            return Err(Error::Config("baseline_epochs > 0 but the model has no baseline head".into()));
        }
        self.model.validate()
    }
}
