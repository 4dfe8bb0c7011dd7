//! Central finite-difference checks of every differentiable operation.

mod common;

use std::time::Instant;

use common::{gradcheck, rng, uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stn_grasp::nn::{ParamStore, ResidualBlock};
use stn_grasp::stn::{affine_grid_batch, grid_sample};
use stn_grasp::tensor::{binary_cross_entropy, conv2d, dense, masked_mse, max_pool2d, avg_pool2d, global_avg_pool, Tensor};

const TOL: f64 = 1e-4;

fn input(seed: u64, shape: &[usize], lo: f64, hi: f64) -> (Vec<usize>, Vec<f64>) {
    let n = shape.iter().product();
    (shape.to_vec(), uniform(&mut rng(seed), n, lo, hi))
}

fn check(name: &str, inputs: &[(Vec<usize>, Vec<f64>)], f: impl Fn(&[Tensor]) -> Tensor) {
    let err = gradcheck(inputs, f, 99);
    assert!(err <= TOL, "{name}: relative error {err:e} > {TOL:e}");
}

#[test]
fn conv2d_all_inputs() {
    for (stride, pad) in [(1, 1), (2, 1), (1, 0)] {
        let x = input(1, &[2, 3, 6, 5], -1.0, 1.0);
        let w = input(2, &[4, 3, 3, 3], -0.5, 0.5);
        let b = input(3, &[4], -0.5, 0.5);
        check("conv2d", &[x, w, b], |t| conv2d(&t[0], &t[1], &t[2], stride, pad).unwrap());
    }
}

#[test]
fn dense_all_inputs() {
    let x = input(4, &[3, 5], -1.0, 1.0);
    let w = input(5, &[4, 5], -1.0, 1.0);
    let b = input(6, &[4], -1.0, 1.0);
    check("dense", &[x, w, b], |t| dense(&t[0], &t[1], &t[2]).unwrap());
}

#[test]
fn relu_path() {
    let x = input(7, &[4, 6], -1.0, 1.0);
    let w = input(8, &[3, 6], -1.0, 1.0);
    let b = input(9, &[3], -0.2, 0.2);
    check("relu", &[x, w, b], |t| dense(&t[0].relu().unwrap(), &t[1], &t[2]).unwrap().relu().unwrap());
}

#[test]
fn pooling() {
    let x = input(10, &[2, 2, 6, 6], -1.0, 1.0);
    check("max_pool2d", &[x.clone()], |t| max_pool2d(&t[0], 2, 2).unwrap());
    check("max_pool2d overlapping", &[x.clone()], |t| max_pool2d(&t[0], 3, 1).unwrap());
    check("avg_pool2d", &[x.clone()], |t| avg_pool2d(&t[0], 2).unwrap());
    check("global_avg_pool", &[x], |t| global_avg_pool(&t[0]).unwrap());
}

#[test]
fn bilinear_sample_wrt_input_and_grid() {
    let img = input(11, &[1, 2, 5, 6], -1.0, 1.0);
    // Covers the interior and the zero-padded border.
    let grid = input(12, &[3, 4, 4, 2], -1.15, 1.15);
    check("grid_sample", &[img, grid], |t| grid_sample(&t[0], &t[1]).unwrap());
    let batch = input(13, &[3, 1, 4, 4], -1.0, 1.0);
    let grid = input(14, &[3, 3, 3, 2], -0.9, 0.9);
    check("grid_sample batched", &[batch, grid], |t| grid_sample(&t[0], &t[1]).unwrap());
}

#[test]
fn affine_grid_wrt_coefficients() {
    let theta = input(15, &[3, 6], -1.0, 1.0);
    check("affine_grid", &[theta.clone()], |t| affine_grid_batch(&t[0], 4, 5).unwrap());
    let img = input(16, &[1, 2, 7, 7], -1.0, 1.0);
    let theta = input(17, &[2, 6], -0.6, 0.6);
    check("affine_grid + grid_sample", &[img, theta], |t| {
        grid_sample(&t[0], &affine_grid_batch(&t[1], 4, 4).unwrap()).unwrap()
    });
}

#[test]
fn residual_block() {
    let mut store = ParamStore::new();
    let mut r = ChaCha8Rng::seed_from_u64(18);
    let down = ResidualBlock::new(&mut store, &mut r, "down", 2, 3, 2).unwrap();
    let same = ResidualBlock::new(&mut store, &mut r, "same", 3, 3, 1).unwrap();
    let x = input(19, &[2, 2, 6, 6], -1.0, 1.0);
    check("residual_block", &[x], |t| {
        let y = down.forward(&store, &t[0]).unwrap();
        same.forward(&store, &y).unwrap()
    });
}

#[test]
fn binary_cross_entropy_wrt_score() {
    let s = input(20, &[6, 1], 0.05, 0.95);
    let labels = Tensor::new(&[6, 1], vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
    check("bce", &[s], |t| binary_cross_entropy(&t[0], &labels).unwrap());
}

#[test]
fn masked_mse_and_elementwise() {
    let p = input(21, &[4, 2], -1.0, 1.0);
    let target = uniform(&mut rng(22), 8, -1.0, 1.0);
    let mask = [1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    check("masked_mse", &[p.clone()], |t| masked_mse(&t[0], &target, &mask).unwrap());
    check("tanh/sigmoid/cos/sin/square", &[p.clone()], |t| {
        let a = t[0].tanh().unwrap().mul(&t[0].sigmoid().unwrap()).unwrap();
        let b = t[0].cos().unwrap().add(&t[0].sin().unwrap().square().unwrap()).unwrap();
        a.sub(&b).unwrap().scale(1.7).unwrap().add_scalar(0.3).unwrap().neg().unwrap()
    });
    check("soft_bound", &[p.clone()], |t| t[0].scale(2.0).unwrap().soft_bound(0.75, 1.0).unwrap());
    let u = input(23, &[5, 1], 0.2, 1.0);
    let v = input(24, &[5, 1], -1.0, 1.0);
    check("atan2", &[v, u], |t| t[0].atan2(&t[1]).unwrap());
    check("shape ops", &[p], |t| {
        let a = t[0].narrow_cols(1, 1).unwrap();
        let b = t[0].narrow_rows(1, 2).unwrap().reshape(&[4, 1]).unwrap();
        let c = Tensor::concat_cols(&[&a, &a]).unwrap();
        Tensor::concat_rows(&[&c.reshape(&[8, 1]).unwrap(), &b]).unwrap().mean().unwrap()
    });
}

#[test]
fn whole_suite_is_fast() {
    let start = Instant::now();
    conv2d_all_inputs();
    dense_all_inputs();
    relu_path();
    pooling();
    bilinear_sample_wrt_input_and_grid();
    affine_grid_wrt_coefficients();
    residual_block();
    binary_cross_entropy_wrt_score();
    masked_mse_and_elementwise();
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "gradient suite took {secs:.1} s");
}

#[test]
fn checker_catches_wrong_gradients() {
    let x = input(25, &[5], 0.5, 1.0);
    let err = gradcheck(&[x], |t| t[0].detach().mul(&t[0]).unwrap(), 1);
    assert!(err > 0.1, "a detached factor must be detected, got {err:e}");
}
