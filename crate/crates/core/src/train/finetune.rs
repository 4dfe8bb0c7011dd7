use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::TrainConfig;
use super::log::TrainLog;
use super::optim::OptimizerState;
use super::pretrain::{block_seed, TrainData};
use crate::data::MultiModalImage;
use crate::error::{contract_err, Result};
use crate::geometry::is_success;
use crate::pipeline::{Block, GraspModel};
use crate::tensor::{binary_cross_entropy, Tensor};

/// Outcome of one fine-tuning phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    pub block: Block,
    pub losses: Vec<f64>,
    pub success_before: f64,
    pub success_after: f64,
    pub reverted: bool,
}

/// Fraction of samples with positives whose detected winner is a success.
pub fn training_success_rate(model: &GraspModel, data: &TrainData) -> Result<f64> {
    let mut total = 0usize;
    let mut hits = 0usize;
    for s in data.samples.iter().filter(|s| !s.positives.is_empty()) {
        let (rect, _) = model.detect(&s.image)?;
        total += 1;
        hits += usize::from(is_success(&rect, &s.positives)?.success);
    }
    if total == 0 {
        return Err(contract_err!("no samples with positives to measure success on"));
    }
    Ok(hits as f64 / total as f64)
}

/// Candidate-success BCE for the samples `idx`: every candidate's score is
/// pushed towards 1 when its decoded rectangle is a success against the
/// sample's positives and towards 0 otherwise.
pub fn candidate_success_loss(model: &GraspModel, data: &TrainData, idx: &[usize]) -> Result<Tensor> {
    let images: Vec<&MultiModalImage> = idx.iter().map(|&i| &data.samples[i].image).collect();
    let fwd = model.forward(&images)?;
    let rects = model.decode_all(&fwd)?;
    let k = model.config.num_candidates;
    let labels = rects
        .iter()
        .enumerate()
        .map(|(g, r)| {
            let positives = &data.samples[idx[g / k]].positives;
            if positives.is_empty() {
                Ok(0.0)
            } else {
                Ok(f64::from(u8::from(is_success(r, positives)?.success)))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    binary_cross_entropy(&fwd.scores, &Tensor::new(&[rects.len(), 1], labels)?)
}

fn snapshot(model: &GraspModel) -> Vec<(String, Vec<f64>)> {
    model
        .params
        .iter()
        .map(|p| (p.name.clone(), p.tensor.values().to_vec()))
        .collect()
}

fn restore(model: &mut GraspModel, snap: Vec<(String, Vec<f64>)>) -> Result<()> {
    snap.into_iter().try_for_each(|(n, v)| model.params.set_values(&n, v))
}

/// End-to-end fine-tuning, one block at a time in the given order
/// (normally classifier, stage 3, stage 2, stage 1). Only the phase's block
/// is trainable; gradients of the candidate-success loss reach it through
/// the samplers. An empty phase list leaves the model unchanged.
pub fn finetune_back_to_front(
    model: &mut GraspModel,
    data: &TrainData,
    cfg: &TrainConfig,
    phases: &[Block],
    log: &mut TrainLog,
) -> Result<Vec<PhaseReport>> {
    if phases.is_empty() || cfg.finetune.epochs_per_phase == 0 {
        return Ok(Vec::new());
    }
    if let Some(b) = phases.iter().find(|b| **b == Block::Baseline) {
        return Err(crate::error::Error::Config(format!("{b} cannot be fine-tuned")));
    }
    let usable: Vec<usize> = (0..data.samples.len()).filter(|&i| data.targets[i].is_some()).collect();
    if usable.is_empty() {
        return Err(contract_err!("fine-tuning needs data"));
    }
    let mut reports = Vec::with_capacity(phases.len());
    for &block in phases {
        let before = training_success_rate(model, data)?;
        let snap = snapshot(model);
        model.params.set_trainable(|n| block.owns(n));
        let losses = run_phase(model, block, data, cfg, &usable, log);
        model.params.set_trainable(|_| true);
        let losses = losses?;
        let after = training_success_rate(model, data)?;
        let reverted = cfg.finetune.revert_on_regression && after < before;
        if reverted {
            warn!("fine-tune {block}: success {after:.4} fell below {before:.4}; phase reverted");
            restore(model, snap)?;
        } else {
            info!("fine-tune {block}: success {before:.4} -> {after:.4}");
        }
        reports.push(PhaseReport {
            block,
            losses,
            success_before: before,
            success_after: if reverted { before } else { after },
            reverted,
        });
    }
    Ok(reports)
}

fn run_phase(
    model: &mut GraspModel,
    block: Block,
    data: &TrainData,
    cfg: &TrainConfig,
    usable: &[usize],
    log: &mut TrainLog,
) -> Result<Vec<f64>> {
    let tag = format!("finetune/{block}");
    let mut rng = ChaCha8Rng::seed_from_u64(block_seed(cfg.seed, &tag));
    let mut opt = OptimizerState::new(cfg.optimizer.clone(), cfg.grad_clip);
    let epochs = cfg.finetune.epochs_per_phase;
    let total = usable.len().div_ceil(cfg.batch_size) * epochs;
    let mut order = usable.to_vec();
    let mut losses = Vec::with_capacity(total);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let step = losses.len();
            let lr = cfg.schedule.rate(cfg.finetune.lr, step, total);
            let loss = candidate_success_loss(model, data, batch)?;
            let value = loss.item();
            loss.backward()?;
            opt.step(&mut model.params, lr)?;
            log.record(&tag, step, value, lr)?;
            losses.push(value);
        }
    }
    Ok(losses)
}
