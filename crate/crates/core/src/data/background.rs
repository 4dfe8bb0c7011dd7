use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::normals::normals_from_slice;
use super::{GraspSample, ImageMeta, MultiModalImage, CROP_SIZE, NUM_CHANNELS};

const NOISE_STD: f64 = 0.01;

/// Near-white table patches with no graspable content.
///
/// Each RGB channel gets a per-patch base level drawn from `U(0.92, 1.0)`
/// plus per-pixel Gaussian noise (σ = 0.01), clamped to `[0, 1]`. Depth is
/// flat in normalized units with the same noise; normals are derived from it.
pub fn make_background_patches(n: usize, seed: u64) -> Vec<GraspSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    let s = CROP_SIZE;
    let px = s * s;
    (0..n)
        .map(|i| {
            let mut channels = vec![0f32; NUM_CHANNELS * px];
            for c in 0..3 {
                let base: f64 = rng.gen_range(0.92..1.0);
                for v in &mut channels[c * px..(c + 1) * px] {
                    *v = (base + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32;
                }
            }
            let depth: Vec<f64> = (0..px).map(|_| noise.sample(&mut rng)).collect();
            for (dst, &d) in channels[3 * px..4 * px].iter_mut().zip(&depth) {
                *dst = d as f32;
            }
            let normals = normals_from_slice(&depth, s, s);
            for (dst, &v) in channels[4 * px..].iter_mut().zip(&normals) {
                *dst = v as f32;
            }
            let id = format!("background-{seed}-{i:04}");
            let meta = ImageMeta {
                source: id.clone(),
                crop_offset: [0, 0],
            };
            GraspSample {
                id,
                image: MultiModalImage::new(s, s, channels, meta).expect("sized above"),
                positives: Vec::new(),
                negatives: Vec::new(),
                is_background: true,
            }
        })
        .collect()
}
