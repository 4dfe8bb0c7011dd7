use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::log::TrainLog;
use super::optim::OptimizerState;
use super::targets::{make_stage_targets, to_normalized, StageTargets};
use crate::data::GraspSample;
use crate::error::{contract_err, Result};
use crate::geometry::GraspRect;
use crate::pipeline::{Block, GraspModel, PipelineConfig};
use crate::stn::{affine_grid_batch, compose, grid_sample, AffineTransform2D};
use crate::tensor::{binary_cross_entropy, masked_mse, Tensor};

/// Samples together with their precomputed stage targets.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub samples: Vec<GraspSample>,
    pub targets: Vec<Option<StageTargets>>,
}

impl TrainData {
    pub fn new(samples: Vec<GraspSample>, cfg: &PipelineConfig) -> Self {
        let targets = samples.iter().map(|s| make_stage_targets(s, cfg)).collect();
        TrainData { samples, targets }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Indices of samples with at least one filled candidate slot.
    pub fn slotted(&self) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.targets[i].as_ref().is_some_and(|t| t.mask.iter().any(|&m| m)))
            .collect()
    }
}

pub(crate) fn block_seed(seed: u64, tag: &str) -> u64 {
    tag.bytes()
        .fold(seed ^ 0x9E37_79B9_7F4A_7C15, |h, b| h.rotate_left(7).wrapping_mul(0x100_0000_01B3) ^ u64::from(b))
}

/// The affine map sampling the patch that covers `rect` exactly.
pub fn rect_view(rect: &GraspRect, cfg: &PipelineConfig) -> AffineTransform2D {
    let s = cfg.image_size as f64;
    let chain = AffineTransform2D::scale_translation(rect.h / s, rect.w / s, 0.0, 0.0);
    let rot = AffineTransform2D::rotation(rect.theta.to_radians());
    let tr = AffineTransform2D::translation(to_normalized(rect.x, s), to_normalized(rect.y, s));
    compose(&chain, &compose(&rot, &tr))
}

/// Stage patch view centred at `loc` and rotated by `theta` radians.
pub fn stage_view(loc: [f64; 2], theta: f64, cfg: &PipelineConfig) -> AffineTransform2D {
    let f = cfg.stage_scale();
    let tr = compose(&AffineTransform2D::rotation(theta), &AffineTransform2D::translation(loc[0], loc[1]));
    compose(&AffineTransform2D::scale_translation(f, f, 0.0, 0.0), &tr)
}

/// Samples one `size × size` patch per `(sample index, view)` pair; pairs for
/// the same sample are batched through one sampler call.
pub fn sample_views(samples: &[GraspSample], views: &[(usize, AffineTransform2D)], size: usize) -> Result<Tensor> {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < views.len() {
        let idx = views[i].0;
        let mut j = i;
        while j < views.len() && views[j].0 == idx {
            j += 1;
        }
        let rows: Vec<f64> = views[i..j].iter().flat_map(|(_, t)| t.to_array()).collect();
        let theta = Tensor::new(&[j - i, 6], rows)?;
        let grid = affine_grid_batch(&theta, size, size)?;
        parts.push(grid_sample(&samples[idx].image.to_tensor(), &grid)?);
        i = j;
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat_rows(&refs)
}

fn images(samples: &[GraspSample], idx: &[usize]) -> Result<Tensor> {
    let parts: Vec<Tensor> = idx.iter().map(|&i| samples[i].image.to_tensor()).collect();
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat_rows(&refs)
}

/// Mean chordal angle loss `1 − cos(2(θ̂ − θ))`.
pub fn chordal_loss(theta: &Tensor, target: &[f64]) -> Result<Tensor> {
    let t = Tensor::new(theta.shape(), target.iter().map(|v| 2.0 * v).collect())?;
    theta.scale(2.0)?.sub(&t)?.cos()?.mean()?.neg()?.add_scalar(1.0)
}

/// Enumerated training examples for one block.
enum Examples {
    Samples(Vec<usize>),
    Views(Vec<(usize, AffineTransform2D, Vec<f64>)>),
}

impl Examples {
    fn len(&self) -> usize {
        match self {
            Examples::Samples(v) => v.len(),
            Examples::Views(v) => v.len(),
        }
    }
}

fn build_examples(model: &GraspModel, block: Block, data: &TrainData) -> Result<Examples> {
    let cfg = &model.config;
    let mut views = Vec::new();
    match block {
        Block::Stage1 | Block::Baseline => return Ok(Examples::Samples(data.slotted())),
        Block::Stage2 => {
            for (i, t) in data.targets.iter().enumerate() {
                let Some(t) = t else { continue };
                for (_, r) in t.all_positives() {
                    let s = cfg.image_size as f64;
                    let loc = [to_normalized(r.x, s), to_normalized(r.y, s)];
                    views.push((i, stage_view(loc, 0.0, cfg), vec![r.theta.to_radians()]));
                }
            }
        }
        Block::Stage3 => {
            for (i, t) in data.targets.iter().enumerate() {
                let Some(t) = t else { continue };
                if t.all_positives().next().is_none() {
                    continue;
                }
                // Crops sit where the current stage-1 network puts each slot.
                let predicted = model.locate(&data.samples[i].image.to_tensor())?.detach();
                let s = cfg.image_size as f64;
                for (slot, r) in t.all_positives() {
                    let loc = match slot {
                        Some(k) => {
                            let p = &predicted.values()[2 * k..2 * k + 2];
                            [p[0], p[1]]
                        }
                        None => [to_normalized(r.x, s), to_normalized(r.y, s)],
                    };
                    let target = super::targets::refinement_target(r, loc, cfg).to_vec();
                    views.push((i, stage_view(loc, r.theta.to_radians(), cfg), target));
                }
            }
        }
        Block::Classifier => {
            for (i, t) in data.targets.iter().enumerate() {
                let Some(t) = t else { continue };
                for ex in &t.classifier_examples {
                    views.push((i, rect_view(&ex.rect, cfg), vec![ex.label]));
                }
            }
        }
    }
    Ok(Examples::Views(views))
}

fn batch_loss(model: &GraspModel, block: Block, data: &TrainData, ex: &Examples, batch: &[usize]) -> Result<Tensor> {
    let cfg = &model.config;
    match ex {
        Examples::Samples(ids) => {
            let idx: Vec<usize> = batch.iter().map(|&b| ids[b]).collect();
            let x = images(&data.samples, &idx)?;
            let targets: Vec<&StageTargets> = idx
                .iter()
                .map(|&i| data.targets[i].as_ref().expect("slotted samples have targets"))
                .collect();
            if block == Block::Stage1 {
                let pred = model.locate(&x)?;
                let t: Vec<f64> = targets.iter().flat_map(|t| t.location_flat()).collect();
                let m: Vec<f64> = targets.iter().flat_map(|t| t.location_mask_flat()).collect();
                return masked_mse(&pred, &t, &m);
            }
            let (loc, theta, scales) = model.baseline_forward(&x)?;
            let size = cfg.image_size as f64;
            let firsts: Vec<GraspRect> = targets
                .iter()
                .map(|t| t.slot_rects[0].expect("slot 0 is filled first"))
                .collect();
            let lt: Vec<f64> = firsts
                .iter()
                .flat_map(|r| [to_normalized(r.x, size), to_normalized(r.y, size)])
                .collect();
            let at: Vec<f64> = firsts.iter().map(|r| r.theta.to_radians()).collect();
            let st: Vec<f64> = targets.iter().flat_map(|t| [t.refinements[0][0], t.refinements[0][1]]).collect();
            let ones = vec![1.0; lt.len()];
            masked_mse(&loc, &lt, &ones)?
                .add(&chordal_loss(&theta, &at)?)?
                .add(&masked_mse(&scales, &st, &ones)?)
        }
        Examples::Views(all) => {
            let mut chosen: Vec<&(usize, AffineTransform2D, Vec<f64>)> = batch.iter().map(|&b| &all[b]).collect();
            chosen.sort_by_key(|v| v.0);
            let views: Vec<(usize, AffineTransform2D)> = chosen.iter().map(|v| (v.0, v.1)).collect();
            let targets: Vec<f64> = chosen.iter().flat_map(|v| v.2.iter().copied()).collect();
            let n = views.len();
            match block {
                Block::Stage2 => {
                    let p = sample_views(&data.samples, &views, cfg.stage_patch)?;
                    let (_, theta) = model.orient(&p)?;
                    chordal_loss(&theta, &targets)
                }
                Block::Stage3 => {
                    let p = sample_views(&data.samples, &views, cfg.stage_patch)?;
                    let r = model.refine(&p)?;
                    masked_mse(&r, &targets, &vec![1.0; 4 * n])
                }
                Block::Classifier => {
                    let p = sample_views(&data.samples, &views, cfg.final_patch)?;
                    let s = model.score(&p)?;
                    binary_cross_entropy(&s, &Tensor::new(&[n, 1], targets)?)
                }
                _ => unreachable!("sample-level blocks handled above"),
            }
        }
    }
}

/// Supervised pretraining of one block with every other block frozen.
///
/// Stage 1 regresses slot locations (masked MSE), stage 2 angles of
/// patches centred on ground-truth grasps (chordal loss), stage 3
/// scales and offsets of patches rotated to the ground-truth angle and
/// centred where stage 1 currently puts the slot (MSE), the classifier
/// labels patches covering positive and negative rectangles (BCE), and
/// the baseline regresses the first slot directly. Returns the per-step
/// loss history; zero epochs leave the model untouched.
pub fn pretrain_component(
    model: &mut GraspModel,
    block: Block,
    data: &TrainData,
    cfg: &TrainConfig,
    log: &mut TrainLog,
) -> Result<Vec<f64>> {
    let epochs = cfg.pretrain.epochs(block);
    if epochs == 0 {
        return Ok(Vec::new());
    }
    if data.is_empty() {
        return Err(contract_err!("pretraining {block} needs data"));
    }
    let ex = build_examples(model, block, data)?;
    if ex.len() == 0 {
        return Err(contract_err!("no training examples for {block}"));
    }
    model.params.set_trainable(|n| block.owns(n));
    let result = run_steps(model, block, data, cfg, &ex, epochs, log);
    model.params.set_trainable(|_| true);
    let history = result?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        info!("pretrain {block}: loss {first:.5} -> {last:.5} over {} steps", history.len());
        if last >= first {
            warn!("pretrain {block}: final loss {last} did not fall below initial {first}");
        }
    }
    Ok(history)
}

fn run_steps(
    model: &mut GraspModel,
    block: Block,
    data: &TrainData,
    cfg: &TrainConfig,
    ex: &Examples,
    epochs: usize,
    log: &mut TrainLog,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(block_seed(cfg.seed, block.name()));
    let mut opt = OptimizerState::new(cfg.optimizer.clone(), cfg.grad_clip);
    let n = ex.len();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let total = per_epoch * epochs;
    let phase = format!("pretrain/{block}");
    let mut history = Vec::with_capacity(total);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let step = history.len();
            let lr = cfg.schedule.rate(cfg.pretrain.lr(block), step, total);
            let loss = batch_loss(model, block, data, ex, batch)?;
            let value = loss.item();
            loss.backward()?;
            opt.step(&mut model.params, lr)?;
            log.record(&phase, step, value, lr)?;
            history.push(value);
        }
    }
    Ok(history)
}
