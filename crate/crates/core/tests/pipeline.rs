//! Structure, identity behaviour, gradient flow and determinism of the
//! detector.

mod common;

use common::{rng, synth_samples, uniform};
use proptest::prelude::*;
use stn_grasp::data::{make_background_patches, MultiModalImage};
use stn_grasp::geometry::GraspRect;
use stn_grasp::pipeline::{GraspModel, PipelineConfig};
use stn_grasp::stn::{affine_grid, bilinear_sample, AffineTransform2D};
use stn_grasp::tensor::Tensor;
use stn_grasp::Error;

fn model(seed: u64) -> GraspModel {
    GraspModel::new(PipelineConfig::default(), seed).unwrap()
}

/// Gives every output layer random weights so gradients reach the trunks.
fn randomize_heads(m: &mut GraspModel, seed: u64, scale: f64) {
    let names: Vec<(String, usize)> = m
        .params
        .iter()
        .filter(|p| p.name.contains(".head."))
        .map(|p| (p.name.clone(), p.tensor.len()))
        .collect();
    let mut r = rng(seed);
    for (name, n) in names {
        let base = m.params.get(&name).unwrap().values().to_vec();
        let noise = uniform(&mut r, n, -scale, scale);
        let v = base.iter().zip(noise).map(|(b, e)| b + e).collect();
        m.params.set_values(&name, v).unwrap();
    }
}

#[test]
fn forward_shapes() {
    let samples = synth_samples(2, 5);
    let m = model(0);
    let imgs: Vec<&MultiModalImage> = samples.iter().map(|s| &s.image).collect();
    let f = m.forward(&imgs).unwrap();
    let cfg = &m.config;
    let g = 2 * cfg.num_candidates;
    assert_eq!(f.locations.shape(), &[g, 2]);
    assert_eq!(f.theta.shape(), &[g, 1]);
    assert_eq!(f.refinement.shape(), &[g, 4]);
    for rows in [&f.translation, &f.rotation, &f.scaling] {
        assert_eq!(rows.shape(), &[g, 6]);
    }
    assert_eq!(f.stage1_patches.shape(), &[g, 7, cfg.stage_patch, cfg.stage_patch]);
    assert_eq!(f.rotated_patches.shape(), &[g, 7, cfg.stage_patch, cfg.stage_patch]);
    assert_eq!(f.final_patches.shape(), &[g, 7, cfg.final_patch, cfg.final_patch]);
    assert_eq!(f.scores.shape(), &[g, 1]);
}

#[test]
fn zero_init_detect_is_centred_canonical_rectangle() {
    let m = model(11);
    for s in synth_samples(1, 1).iter().chain(&make_background_patches(1, 2)) {
        let (rect, trace) = m.detect(&s.image).unwrap();
        assert_eq!(rect, GraspRect { x: 200.0, y: 200.0, theta: 0.0, w: 60.0, h: 30.0 });
        assert_eq!(trace.winner, 0);
        assert!(trace.candidates.iter().all(|c| c.score == 0.5 && c.rect == rect));
    }
}

#[test]
fn identity_sampling_reproduces_input() {
    let (c, h, w) = (7, 23, 31);
    let data = uniform(&mut rng(3), c * h * w, -2.0, 2.0);
    let x = Tensor::new(&[1, c, h, w], data.clone()).unwrap();
    let grid = affine_grid(&AffineTransform2D::identity(), h, w).unwrap();
    let y = bilinear_sample(&x, &grid).unwrap();
    let worst = y.values().iter().zip(&data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-12, "identity sampling error {worst}");
}

#[test]
fn candidate_scores_reach_every_stage_through_the_samplers() {
    let samples = synth_samples(1, 9);
    let mut m = model(4);
    randomize_heads(&mut m, 8, 0.05);
    let f = m.forward(&[&samples[0].image]).unwrap();
    f.scores.sum().unwrap().backward().unwrap();
    for block in ["stage1", "stage2", "stage3", "classifier"] {
        for part in ["head.weight", "head.bias"] {
            let name = format!("{block}.{part}");
            let g = m.params.get(&name).unwrap().grad_or_zeros();
            assert!(g.iter().any(|v| *v != 0.0), "no gradient reaches {name}");
        }
        let trunk: f64 = m
            .params
            .iter()
            .filter(|p| p.name.starts_with(&format!("{block}.trunk")))
            .flat_map(|p| p.tensor.grad_or_zeros())
            .map(f64::abs)
            .sum();
        assert!(trunk > 0.0, "no gradient reaches the {block} trunk");
    }
}

#[test]
fn construction_and_detection_are_deterministic() {
    let samples = synth_samples(1, 2);
    let (mut a, mut b) = (model(21), model(21));
    assert_eq!(a.params.flat_values(), b.params.flat_values());
    assert_ne!(a.params.flat_values(), model(22).params.flat_values());
    randomize_heads(&mut a, 1, 0.05);
    randomize_heads(&mut b, 1, 0.05);
    let ta = a.detect(&samples[0].image).unwrap().1.to_json().unwrap();
    let tb = b.detect(&samples[0].image).unwrap().1.to_json().unwrap();
    assert_eq!(ta, tb);
    assert_eq!(a.checkpoint_bytes().unwrap(), b.checkpoint_bytes().unwrap());
}

#[test]
fn trace_records_every_stage_of_every_candidate() {
    let samples = synth_samples(1, 3);
    let mut m = model(5);
    randomize_heads(&mut m, 2, 0.05);
    let (rect, trace) = m.detect(&samples[0].image).unwrap();
    assert_eq!(trace.candidates.len(), 4);
    let best = trace
        .candidates
        .iter()
        .map(|c| c.score)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(trace.winner_record().score, best);
    assert_eq!(trace.winner_record().rect, rect);
    let json: serde_json::Value = serde_json::from_str(&trace.to_json().unwrap()).unwrap();
    for c in json["candidates"].as_array().unwrap() {
        for key in ["location", "location_px", "theta_deg", "refinement", "score", "transforms", "stage_rects", "rect"] {
            assert!(!c[key].is_null(), "trace lacks {key}");
        }
    }
    for c in &trace.candidates {
        assert_eq!(c.stage_rects.stage3, c.rect);
        assert_eq!((c.stage_rects.stage1.w, c.stage_rects.stage1.h), (60.0, 30.0));
        assert_eq!(c.stage_rects.stage1.theta, 0.0);
        assert!((c.stage_rects.stage2.theta - c.theta_deg).abs() < 1e-9);
        assert!((c.stage_rects.stage1.x - c.location_px[0]).abs() < 1e-9);
        let p = c.patches.as_ref().unwrap();
        assert_eq!(p.final_patch.shape(), &[7, 64, 64]);
    }
}

#[test]
fn wrong_image_size_is_input_error() {
    let m = model(0);
    let meta = stn_grasp::data::ImageMeta { source: "x".into(), crop_offset: [0, 0] };
    let img = MultiModalImage::new(100, 100, vec![0.0; 7 * 100 * 100], meta).unwrap();
    assert!(matches!(m.detect(&img), Err(Error::Input(_))));
}

#[test]
fn checkpoint_round_trip_preserves_detection() {
    let samples = synth_samples(1, 4);
    let mut m = model(6);
    randomize_heads(&mut m, 3, 0.05);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    m.save(&path).unwrap();
    let back = GraspModel::load(&path, Some(&m.config)).unwrap();
    assert_eq!(
        m.detect(&samples[0].image).unwrap().1.to_json().unwrap(),
        back.detect(&samples[0].image).unwrap().1.to_json().unwrap()
    );
    let other = PipelineConfig { num_candidates: 3, ..PipelineConfig::default() };
    assert!(matches!(GraspModel::load(&path, Some(&other)), Err(Error::Mismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn decoded_rectangles_respect_head_bounds(seed in 0u64..10_000, scale in 0.01..50.0f64) {
        let image = make_background_patches(1, seed).remove(0).image;
        let mut m = model(seed);
        randomize_heads(&mut m, seed, scale);
        // detect itself rejects any rectangle outside the bounded ranges.
        let (rect, trace) = m.detect(&image).unwrap();
        let cfg = &m.config;
        prop_assert!((0.0..=400.0).contains(&rect.x) && (0.0..=400.0).contains(&rect.y));
        prop_assert!((-90.0..90.0).contains(&rect.theta));
        let within = |v: f64, c: f64| v >= c * cfg.scale_min - 1e-9 && v <= c * cfg.scale_max + 1e-9;
        prop_assert!(within(rect.w, cfg.canonical_w) && within(rect.h, cfg.canonical_h));
        for c in &trace.candidates {
            prop_assert!((0.0..=1.0).contains(&c.score));
            prop_assert!(c.location.iter().all(|v| v.abs() <= cfg.loc_scale));
        }
    }
}
