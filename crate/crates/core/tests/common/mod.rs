#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stn_grasp::data::synth::{write_synthetic_dataset, SynthConfig};
use stn_grasp::data::{load_cornell, GraspSample};
use stn_grasp::geometry::GraspRect;
use stn_grasp::tensor::Tensor;
use stn_grasp::train::TrainConfig;

/// Jaccard index by counting the centres of an `n × n` lattice over the
/// joint bounding box that fall inside each rectangle.
pub fn raster_jaccard(a: &GraspRect, b: &GraspRect, n: usize) -> f64 {
    let inside = |r: &GraspRect, x: f64, y: f64| {
        let (s, c) = r.theta.to_radians().sin_cos();
        let (dx, dy) = (x - r.x, y - r.y);
        (c * dx + s * dy).abs() <= r.h / 2.0 && (-s * dx + c * dy).abs() <= r.w / 2.0
    };
    let corners: Vec<[f64; 2]> = a.corners().into_iter().chain(b.corners()).collect();
    let (x0, x1) = corners.iter().fold((f64::MAX, f64::MIN), |(l, h), p| (l.min(p[0]), h.max(p[0])));
    let (y0, y1) = corners.iter().fold((f64::MAX, f64::MIN), |(l, h), p| (l.min(p[1]), h.max(p[1])));
    let (sx, sy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let (mut inter, mut union) = (0u64, 0u64);
    for i in 0..n {
        let y = y0 + (i as f64 + 0.5) * sy;
        for j in 0..n {
            let x = x0 + (j as f64 + 0.5) * sx;
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += u64::from(ia && ib);
            union += u64::from(ia || ib);
        }
    }
    inter as f64 / union as f64
}

/// Seeded uniform values in `[lo, hi)`.
pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-6;
/// Relative errors use `max(|analytic|, |numeric|, FD_FLOOR)` as denominator.
pub const FD_FLOOR: f64 = 1e-3;

/// Largest relative error between backward gradients and central finite
/// differences of `sum(f(inputs) ⊙ probe)` with respect to every input.
pub fn gradcheck(inputs: &[(Vec<usize>, Vec<f64>)], f: impl Fn(&[Tensor]) -> Tensor, seed: u64) -> f64 {
    let make = |vals: &[Vec<f64>], grad: bool| -> Vec<Tensor> {
        inputs
            .iter()
            .zip(vals)
            .map(|((shape, _), v)| {
                let t = Tensor::new(shape, v.clone()).unwrap();
                if grad {
                    t.with_requires_grad(true)
                } else {
                    t
                }
            })
            .collect()
    };
    let base: Vec<Vec<f64>> = inputs.iter().map(|(_, v)| v.clone()).collect();
    let leaves = make(&base, true);
    let out = f(&leaves);
    let probe = Tensor::new(out.shape(), uniform(&mut rng(seed), out.len(), -1.0, 1.0)).unwrap();
    let loss_of = |o: &Tensor| -> f64 {
        o.values().iter().zip(probe.values()).map(|(a, b)| a * b).sum()
    };
    out.mul(&probe).unwrap().sum().unwrap().backward().unwrap();
    let mut worst: f64 = 0.0;
    for (k, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad_or_zeros();
        for i in 0..base[k].len() {
            let mut plus = base.clone();
            plus[k][i] += FD_STEP;
            let mut minus = base.clone();
            minus[k][i] -= FD_STEP;
            let numeric = (loss_of(&f(&make(&plus, false))) - loss_of(&f(&make(&minus, false)))) / (2.0 * FD_STEP);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Preprocessed samples of a synthetic Cornell-format dataset.
pub fn synth_samples(count: usize, seed: u64) -> Vec<GraspSample> {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(dir.path(), &SynthConfig { count, seed, ..SynthConfig::default() }).unwrap();
    load_cornell(dir.path()).unwrap().0
}

/// A small training configuration for quick runs.
pub fn quick_config(epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.batch_size = 4;
    cfg.background_patches = 4;
    cfg.train_ratio = 1.0;
    cfg.pretrain.stage1_epochs = epochs;
    cfg.pretrain.stage2_epochs = epochs;
    cfg.pretrain.stage3_epochs = epochs;
    cfg.pretrain.classifier_epochs = epochs;
    cfg.finetune.epochs_per_phase = 1;
    cfg
}
