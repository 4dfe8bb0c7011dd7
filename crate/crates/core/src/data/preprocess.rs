use log::warn;

use super::normals::normals_from_slice;
use super::{GraspSample, ImageMeta, MultiModalImage, CROP_SIZE, NUM_CHANNELS};
use crate::error::{Error, Result};
use crate::geometry::GraspRect;

/// A raw RGB-D frame before cropping. Depth is row-major in millimetres,
/// with NaN marking missing measurements.
#[derive(Debug, Clone)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    /// Interleaved 8-bit RGB.
    pub rgb: Vec<u8>,
    pub depth: Vec<f64>,
}

impl RawFrame {
    pub fn validate(&self) -> Result<()> {
        if self.rgb.len() != 3 * self.width * self.height || self.depth.len() != self.width * self.height {
            return Err(Error::Input(format!(
                "raw frame {}x{} has {} rgb bytes and {} depth values",
                self.width,
                self.height,
                self.rgb.len(),
                self.depth.len()
            )));
        }
        Ok(())
    }
}

/// Replaces NaN entries with the value of the nearest valid pixel
/// (Euclidean distance; ties go to the smaller row, then smaller column).
/// A map without any valid pixel becomes all zeros.
pub fn fill_depth_holes(depth: &mut [f64], h: usize, w: usize) {
    let valid: Vec<bool> = depth.iter().map(|v| !v.is_nan()).collect();
    if !valid.iter().any(|&v| v) {
        depth.fill(0.0);
        return;
    }
    if valid.iter().all(|&v| v) {
        return;
    }
    let source = depth.to_vec();
    let max_r = h.max(w) as isize;
    for r in 0..h as isize {
        for c in 0..w as isize {
            if valid[(r * w as isize + c) as usize] {
                continue;
            }
            // best = (squared distance, row, col)
            let mut best: Option<(isize, isize, isize)> = None;
            let visit = |rr: isize, cc: isize, best: &mut Option<(isize, isize, isize)>| {
                if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                    return;
                }
                if !valid[(rr * w as isize + cc) as usize] {
                    return;
                }
                let d2 = (rr - r).pow(2) + (cc - c).pow(2);
                let cand = (d2, rr, cc);
                if best.map_or(true, |b| cand < b) {
                    *best = Some(cand);
                }
            };
            let mut k = 1;
            while k <= max_r {
                for cc in c - k..=c + k {
                    visit(r - k, cc, &mut best);
                    visit(r + k, cc, &mut best);
                }
                for rr in r - k + 1..r + k {
                    visit(rr, c - k, &mut best);
                    visit(rr, c + k, &mut best);
                }
                // Pixels on ring k + 1 are at least k + 1 away.
                if let Some((d2, _, _)) = best {
                    if (k + 1) * (k + 1) > d2 {
                        break;
                    }
                }
                k += 1;
            }
            let (_, br, bc) = best.expect("at least one valid pixel exists");
            depth[(r * w as isize + c) as usize] = source[(br * w as isize + bc) as usize];
        }
    }
}

/// Centre-crops a raw frame to 400×400 and builds the seven-channel stack.
///
/// RGB is scaled to `[0, 1]`. Depth holes are filled by nearest valid
/// neighbour, normals are computed from the filled depth, and depth is then
/// standardized with the mean and standard deviation of the originally valid
/// pixels (a zero deviation is treated as 1). Rectangles are shifted into crop
/// coordinates; rectangles whose centre leaves the crop are dropped.
pub fn preprocess(
    source: &str,
    raw: &RawFrame,
    positives: &[GraspRect],
    negatives: &[GraspRect],
) -> Result<GraspSample> {
    raw.validate()?;
    if raw.width < CROP_SIZE || raw.height < CROP_SIZE {
        return Err(Error::Input(format!(
            "{source}: image {}x{} is smaller than {CROP_SIZE}x{CROP_SIZE}",
            raw.width, raw.height
        )));
    }
    let (ox, oy) = ((raw.width - CROP_SIZE) / 2, (raw.height - CROP_SIZE) / 2);
    let s = CROP_SIZE;
    let n = s * s;
    let mut channels = vec![0f32; NUM_CHANNELS * n];
    let mut depth = vec![0.0; n];
    for r in 0..s {
        for c in 0..s {
            let src = (r + oy) * raw.width + c + ox;
            let k = r * s + c;
            for ch in 0..3 {
                channels[ch * n + k] = (raw.rgb[3 * src + ch] as f64 / 255.0) as f32;
            }
            depth[k] = raw.depth[src];
        }
    }
    let valid: Vec<f64> = depth.iter().copied().filter(|v| v.is_finite()).collect();
    let (mean, std) = mean_std(&valid);
    for v in depth.iter_mut() {
        if v.is_infinite() {
            *v = f64::NAN;
        }
    }
    fill_depth_holes(&mut depth, s, s);
    let normals = normals_from_slice(&depth, s, s);
    for k in 0..n {
        channels[3 * n + k] = ((depth[k] - mean) / std) as f32;
    }
    for (dst, src) in channels[4 * n..].iter_mut().zip(&normals) {
        *dst = *src as f32;
    }

    let shift = |rects: &[GraspRect], kind: &str| -> Vec<GraspRect> {
        rects
            .iter()
            .map(|r| r.translated(-(ox as f64), -(oy as f64)))
            .filter(|r| {
                let inside = (0.0..s as f64).contains(&r.x) && (0.0..s as f64).contains(&r.y);
                if !inside {
                    warn!("{source}: {kind} rectangle centred at ({:.1}, {:.1}) falls outside the crop; dropped", r.x, r.y);
                }
                inside
            })
            .collect()
    };
    let image = MultiModalImage::new(
        s,
        s,
        channels,
        ImageMeta {
            source: source.to_string(),
            crop_offset: [ox, oy],
        },
    )?;
    Ok(GraspSample {
        id: source.to_string(),
        image,
        positives: shift(positives, "positive"),
        negatives: shift(negatives, "negative"),
        is_background: false,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 1.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}
