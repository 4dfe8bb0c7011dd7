//! Stage-wise supervised pretraining, back-to-front fine-tuning and
//! evaluation.

mod config;
mod eval;
mod finetune;
mod log;
mod optim;
mod pretrain;
mod targets;

pub use config::{
    parse_phases, FinetuneConfig, Optimizer, PretrainConfig, Schedule, TrainConfig, TRAIN_CONFIG_VERSION,
};
pub use eval::{
    evaluate, format_table, Baseline, Detector, EvalReport, GraspPredictor, SampleOutcome, REPORT_FORMAT_VERSION,
};
pub use finetune::{candidate_success_loss, finetune_back_to_front, training_success_rate, PhaseReport};
pub use log::{LogRecord, TrainLog};
pub use optim::OptimizerState;
pub use pretrain::{chordal_loss, pretrain_component, rect_view, sample_views, stage_view, TrainData};
pub use targets::{
    make_stage_targets, refinement_target, sort_top_right, to_normalized, ClassifierExample, StageTargets,
};

use serde::Serialize;

use crate::data::{make_background_patches, GraspSample};
use crate::error::Result;
use crate::pipeline::{Block, GraspModel};

/// Loss histories of a full training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub pretrain: Vec<(Block, Vec<f64>)>,
    pub finetune: Vec<PhaseReport>,
}

/// Training samples plus `cfg.background_patches` white background patches.
pub fn prepare_data(mut samples: Vec<GraspSample>, cfg: &TrainConfig) -> TrainData {
    samples.extend(make_background_patches(cfg.background_patches, cfg.seed));
    TrainData::new(samples, &cfg.model)
}

/// Pretrains stage 1, stage 2, stage 3, the classifier and (if configured)
/// the baseline head, then fine-tunes the blocks in `phases`.
pub fn run_training(
    model: &mut GraspModel,
    data: &TrainData,
    cfg: &TrainConfig,
    phases: &[Block],
    log: &mut TrainLog,
) -> Result<TrainSummary> {
    let mut pretrain = Vec::new();
    for block in Block::ALL {
        if block == Block::Baseline && !model.has_baseline() {
            continue;
        }
        let history = pretrain_component(model, block, data, cfg, log)?;
        pretrain.push((block, history));
    }
    let finetune = finetune_back_to_front(model, data, cfg, phases, log)?;
    log.flush()?;
    Ok(TrainSummary { pretrain, finetune })
}
