//! Training behaviour: target construction, masking, freezing, and
//! convergence on small fixtures.

mod common;

use common::{quick_config, synth_samples};
use stn_grasp::data::{make_background_patches, GraspSample};
use stn_grasp::geometry::GraspRect;
use stn_grasp::pipeline::{Block, GraspModel, PipelineConfig};
use stn_grasp::tensor::{binary_cross_entropy, masked_mse, Tensor};
use stn_grasp::train::{
    finetune_back_to_front, make_stage_targets, parse_phases, pretrain_component, rect_view, sample_views,
    OptimizerState, TrainConfig, TrainData, TrainLog,
};
use stn_grasp::Error;

fn with_positives(n: usize) -> GraspSample {
    let mut s = make_background_patches(1, 7).remove(0);
    s.is_background = false;
    s.id = format!("fixture{n}");
    s.positives = (0..n)
        .map(|i| GraspRect::new(60.0 + 40.0 * i as f64, 300.0 - 20.0 * i as f64, 10.0 * i as f64, 50.0, 25.0).unwrap())
        .collect();
    s
}

fn values_by_name(m: &GraspModel) -> Vec<(String, Vec<f64>)> {
    m.params.iter().map(|p| (p.name.clone(), p.tensor.values().to_vec())).collect()
}

fn assert_only_block_changed(before: &[(String, Vec<f64>)], after: &GraspModel, block: Option<Block>) {
    for ((name, old), (_, new)) in before.iter().zip(values_by_name(after)) {
        let owned = block.is_some_and(|b| b.owns(name));
        if !owned {
            assert!(old == &new, "{name} changed outside the trained block");
        }
    }
}

#[test]
fn stage_targets_fill_slots_top_right_first() {
    let cfg = PipelineConfig::default();
    let t = make_stage_targets(&with_positives(2), &cfg).unwrap();
    assert_eq!(t.mask, vec![true, true, false, false]);
    assert_eq!(t.locations[2], [0.0, 0.0]);
    assert_eq!(t.locations[3], [0.0, 0.0]);
    assert!(t.slot_rects[2].is_none() && t.slot_rects[3].is_none());
    // The second rectangle lies closer to (399, 0).
    assert_eq!(t.slot_rects[0].unwrap().x, 100.0);

    let t = make_stage_targets(&with_positives(6), &cfg).unwrap();
    assert!(t.mask.iter().all(|m| *m));
    assert_eq!(t.extra_positives.len(), 2);
    assert_eq!(t.classifier_examples.iter().filter(|e| e.label == 1.0).count(), 6);

    let mut centred = with_positives(1);
    centred.positives[0] = GraspRect::new(200.0, 200.0, 0.0, 60.0, 30.0).unwrap();
    let t = make_stage_targets(&centred, &cfg).unwrap();
    assert_eq!(t.locations[0], [0.0, 0.0]);
    assert_eq!(t.refinements[0], [1.0, 1.0, 0.0, 0.0]);

    let mut empty = with_positives(0);
    empty.is_background = false;
    assert!(make_stage_targets(&empty, &cfg).is_none());
    let bg = make_stage_targets(&make_background_patches(1, 0)[0], &cfg).unwrap();
    assert!(bg.mask.iter().all(|m| !m));
    assert!(bg.classifier_examples.iter().all(|e| e.label == 0.0));
}

#[test]
fn masked_slots_receive_no_gradient() {
    let cfg = PipelineConfig::default();
    let sample = with_positives(2);
    let t = make_stage_targets(&sample, &cfg).unwrap();
    let model = GraspModel::new(cfg, 3).unwrap();
    let x = sample.image.to_tensor();

    let pred = model.locate(&x).unwrap();
    let leaf = Tensor::new(pred.shape(), pred.values().to_vec()).unwrap().with_requires_grad(true);
    masked_mse(&leaf, &t.location_flat(), &t.location_mask_flat()).unwrap().backward().unwrap();
    let g = leaf.grad_or_zeros();
    assert!(g[4..].iter().all(|v| *v == 0.0));
    assert!(g[..4].iter().any(|v| *v != 0.0));

    // Arbitrary targets on masked slots leave every parameter gradient intact.
    let grads = |target: Vec<f64>| {
        model.params.zero_grad();
        let p = model.locate(&x).unwrap();
        masked_mse(&p, &target, &t.location_mask_flat()).unwrap().backward().unwrap();
        model.params.grads()
    };
    let mut scrambled = t.location_flat();
    scrambled[4..].iter_mut().for_each(|v| *v = 0.9);
    assert_eq!(grads(t.location_flat()), grads(scrambled));
}

#[test]
fn pretraining_touches_only_its_block() {
    let mut cfg = quick_config(1);
    cfg.pretrain.baseline_epochs = 1;
    let data = TrainData::new(synth_samples(2, 1), &cfg.model);
    let mut model = GraspModel::new(cfg.model.clone(), 1).unwrap();
    for block in Block::ALL {
        let before = values_by_name(&model);
        let h = pretrain_component(&mut model, block, &data, &cfg, &mut TrainLog::in_memory()).unwrap();
        assert!(!h.is_empty());
        assert_only_block_changed(&before, &model, Some(block));
        assert_ne!(before, values_by_name(&model), "{block} did not train");
        assert!(model.params.iter().all(|p| p.tensor.requires_grad()));
    }
}

#[test]
fn finetune_phases_touch_only_their_block() {
    let mut cfg = quick_config(1);
    cfg.finetune.revert_on_regression = false;
    cfg.finetune.lr = 1e-2;
    let data = TrainData::new(synth_samples(2, 2), &cfg.model);
    let mut model = GraspModel::new(cfg.model.clone(), 2).unwrap();
    pretrain_component(&mut model, Block::Classifier, &data, &cfg, &mut TrainLog::in_memory()).unwrap();
    for block in [Block::Classifier, Block::Stage3, Block::Stage2, Block::Stage1] {
        let before = values_by_name(&model);
        let r = finetune_back_to_front(&mut model, &data, &cfg, &[block], &mut TrainLog::in_memory()).unwrap();
        assert_eq!(r.len(), 1);
        assert_only_block_changed(&before, &model, Some(block));
    }
}

#[test]
fn identity_cases_leave_parameters_unchanged() {
    let data = TrainData::new(synth_samples(2, 3), &PipelineConfig::default());
    let mut model = GraspModel::new(PipelineConfig::default(), 0).unwrap();
    let before = values_by_name(&model);
    let mut log = TrainLog::in_memory();

    let mut cfg = quick_config(1);
    assert!(finetune_back_to_front(&mut model, &data, &cfg, &[], &mut log).unwrap().is_empty());
    cfg.finetune.epochs_per_phase = 0;
    assert!(finetune_back_to_front(&mut model, &data, &cfg, &[Block::Stage1], &mut log).unwrap().is_empty());
    assert!(pretrain_component(&mut model, Block::Baseline, &data, &cfg, &mut log).unwrap().is_empty());
    assert_only_block_changed(&before, &model, None);

    let mut cfg = quick_config(1);
    cfg.pretrain.lr = 0.0;
    cfg.pretrain.baseline_lr = 0.0;
    cfg.finetune.lr = 0.0;
    cfg.finetune.revert_on_regression = false;
    cfg.pretrain.baseline_epochs = 1;
    for block in Block::ALL {
        pretrain_component(&mut model, block, &data, &cfg, &mut log).unwrap();
    }
    finetune_back_to_front(&mut model, &data, &cfg, &[Block::Classifier, Block::Stage1], &mut log).unwrap();
    assert_only_block_changed(&before, &model, None);
}

#[test]
fn phase_lists_are_validated() {
    assert!(parse_phases("").unwrap().is_empty());
    assert_eq!(parse_phases("classifier, stage1").unwrap(), vec![Block::Classifier, Block::Stage1]);
    assert!(matches!(parse_phases("stage9"), Err(Error::Config(_))));
    assert!(matches!(parse_phases("baseline"), Err(Error::Config(_))));
    let cfg = TrainConfig::default();
    let data = TrainData::new(synth_samples(1, 4), &cfg.model);
    let mut model = GraspModel::new(cfg.model.clone(), 0).unwrap();
    let r = finetune_back_to_front(&mut model, &data, &cfg, &[Block::Baseline], &mut TrainLog::in_memory());
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn classifier_separates_two_patches() {
    let cfg = TrainConfig::default();
    let mut model = GraspModel::new(cfg.model.clone(), 5).unwrap();
    model.params.set_trainable(|n| Block::Classifier.owns(n));
    let n = 7 * 64 * 64;
    let data: Vec<f64> = (0..2 * n).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
    let x = Tensor::new(&[2, 7, 64, 64], data).unwrap();
    let y = Tensor::new(&[2, 1], vec![1.0, 0.0]).unwrap();
    let mut opt = OptimizerState::new(cfg.optimizer.clone(), cfg.grad_clip);
    let mut reached = None;
    for step in 0..200 {
        let loss = binary_cross_entropy(&model.score(&x).unwrap(), &y).unwrap();
        if loss.item() < 0.1 {
            reached = Some(step);
            break;
        }
        loss.backward().unwrap();
        opt.step(&mut model.params, 1e-3).unwrap();
    }
    assert!(reached.is_some(), "BCE stayed above 0.1 for 200 steps");
}

#[test]
fn stage1_fits_a_single_fixture() {
    let mut cfg = quick_config(0);
    cfg.batch_size = 1;
    cfg.pretrain.stage1_epochs = 500;
    let data = TrainData::new(synth_samples(1, 6), &cfg.model);
    let mut model = GraspModel::new(cfg.model.clone(), 6).unwrap();
    let h = pretrain_component(&mut model, Block::Stage1, &data, &cfg, &mut TrainLog::in_memory()).unwrap();
    let first = h.iter().position(|l| *l < 1e-3);
    assert!(first.is_some(), "stage-1 MSE never fell below 1e-3; last {}", h[h.len() - 1]);
}

#[test]
fn every_component_halves_its_loss_and_rejects_backgrounds() {
    let mut cfg = quick_config(10);
    cfg.pretrain.baseline_epochs = 10;
    let data = TrainData::new(
        synth_samples(8, 0).into_iter().chain(make_background_patches(4, 0)).collect(),
        &cfg.model,
    );
    let mut model = GraspModel::new(cfg.model.clone(), 0).unwrap();
    for block in [Block::Stage1, Block::Stage2, Block::Stage3, Block::Classifier, Block::Baseline] {
        let h = pretrain_component(&mut model, block, &data, &cfg, &mut TrainLog::in_memory()).unwrap();
        let per_epoch = h.len() / 10;
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let (first, last) = (mean(&h[..per_epoch]), mean(&h[h.len() - per_epoch..]));
        eprintln!("{block}: {first:.5} -> {last:.5}");
        assert!(last < 0.5 * first, "{block}: {first} -> {last}");
    }
    let model_cfg = &cfg.model;
    let backgrounds: Vec<(usize, _)> = data
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_background)
        .flat_map(|(i, _)| {
            let t = data.targets[i].as_ref().unwrap();
            t.classifier_examples.iter().map(move |e| (i, rect_view(&e.rect, model_cfg))).collect::<Vec<_>>()
        })
        .collect();
    let patches = sample_views(&data.samples, &backgrounds, cfg.model.final_patch).unwrap();
    let scores = model.score(&patches).unwrap();
    assert!(scores.values().iter().all(|s| *s < 0.5), "background scores {:?}", scores.values());
}
