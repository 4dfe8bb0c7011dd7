//! Synthetic Cornell-format fixtures: a coloured bar lying on a white table,
//! annotated with grasps across the bar and non-grasps along it or beside it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle_deg, GraspRect};

const TABLE_DEPTH_MM: f64 = 1000.0;
const OBJECT_HEIGHT_MM: f64 = 40.0;

/// How depth is stored next to each RGB image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthFormat {
    /// `pcdNNNNd.png`, 16-bit millimetres, 0 = missing.
    Png16,
    /// `pcdNNNN.txt`, ASCII point cloud with a per-point pixel index.
    PointCloud,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub depth_format: DepthFormat,
    /// First item number; files are named `pcd{first_index + i:04}`.
    pub first_index: usize,
    /// Items (by position) whose positive file gets an extra all-NaN rectangle.
    pub nan_rect_items: Vec<usize>,
    /// Number of missing-depth pixels sprinkled into each frame.
    pub depth_holes: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 8,
            seed: 0,
            width: 640,
            height: 480,
            depth_format: DepthFormat::Png16,
            first_index: 100,
            nan_rect_items: Vec::new(),
            depth_holes: 12,
        }
    }
}

/// What was written for one item, in raw-frame pixel coordinates.
#[derive(Debug, Clone)]
pub struct SynthItem {
    pub stem: String,
    pub object: GraspRect,
    pub positives: Vec<GraspRect>,
    pub negatives: Vec<GraspRect>,
}

fn inside(r: &GraspRect, px: f64, py: f64) -> bool {
    let (s, c) = r.theta.to_radians().sin_cos();
    let (dx, dy) = (px - r.x, py - r.y);
    let along = c * dx + s * dy;
    let across = -s * dx + c * dy;
    along.abs() <= r.h / 2.0 && across.abs() <= r.w / 2.0
}

fn rect_lines(out: &mut String, r: &GraspRect) {
    for [x, y] in r.corners() {
        let _ = writeln!(out, "{x:.3} {y:.3}");
    }
}

fn make_item(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> (GraspRect, Vec<GraspRect>, Vec<GraspRect>) {
    let (cx, cy) = (cfg.width as f64 / 2.0, cfg.height as f64 / 2.0);
    let length = rng.gen_range(110.0..170.0);
    let thickness = rng.gen_range(22.0..36.0);
    // The object's long axis is the rectangle's `h` direction.
    let object = GraspRect::new(
        cx + rng.gen_range(-70.0..70.0),
        cy + rng.gen_range(-70.0..70.0),
        rng.gen_range(-90.0..90.0),
        thickness,
        length,
    )
    .expect("positive sizes");
    let (s, c) = object.theta.to_radians().sin_cos();
    let opening = thickness + rng.gen_range(14.0..22.0);
    let n_pos = rng.gen_range(2..=6);
    let positives = (0..n_pos)
        .map(|_| {
            let t = rng.gen_range(-0.2..0.2) * length;
            let plate = rng.gen_range(20.0..30.0);
            let theta = object.theta + rng.gen_range(-5.0..5.0);
            GraspRect::new(object.x + c * t, object.y + s * t, theta, opening, plate).expect("positive sizes")
        })
        .collect();
    let negatives = vec![
        // Closing along the long axis: far too wide for the gripper.
        GraspRect::new(object.x, object.y, normalize_angle_deg(object.theta + 90.0), opening, 25.0)
            .expect("positive sizes"),
        // Beside the object on empty table.
        GraspRect::new(
            object.x - s * (thickness + 45.0),
            object.y + c * (thickness + 45.0),
            object.theta,
            opening,
            25.0,
        )
        .expect("positive sizes"),
    ];
    (object, positives, negatives)
}

/// Writes `cfg.count` items into `dir` (created if needed).
pub fn write_synthetic_dataset(dir: &Path, cfg: &SynthConfig) -> Result<Vec<SynthItem>> {
    if cfg.width < 400 || cfg.height < 400 {
        return Err(Error::Config(format!(
            "synthetic frames must be at least 400x400, got {}x{}",
            cfg.width, cfg.height
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (cfg.width, cfg.height);
    let mut items = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let stem = format!("pcd{:04}", cfg.first_index + i);
        let (object, positives, negatives) = make_item(&mut rng, cfg);
        let colour = [
            rng.gen_range(30u8..200),
            rng.gen_range(30u8..200),
            rng.gen_range(30u8..200),
        ];

        let mut rgb = ImageBuffer::<Rgb<u8>, Vec<u8>>::new(w as u32, h as u32);
        let mut depth = vec![TABLE_DEPTH_MM; w * h];
        for y in 0..h {
            for x in 0..w {
                let on = inside(&object, x as f64, y as f64);
                let px = if on {
                    colour.map(|v| v.saturating_add(rng.gen_range(0..8)))
                } else {
                    [0; 3].map(|_| rng.gen_range(238u8..=252))
                };
                rgb.put_pixel(x as u32, y as u32, Rgb(px));
                // Slight tilt of the table plus the raised object.
                depth[y * w + x] = TABLE_DEPTH_MM + 0.02 * (y as f64 - h as f64 / 2.0)
                    - if on { OBJECT_HEIGHT_MM } else { 0.0 };
            }
        }
        for _ in 0..cfg.depth_holes {
            let k = rng.gen_range(0..w * h);
            depth[k] = f64::NAN;
        }

        let rgb_path = dir.join(format!("{stem}r.png"));
        rgb.save(&rgb_path).map_err(|source| Error::Image {
            path: rgb_path.clone(),
            source,
        })?;
        match cfg.depth_format {
            DepthFormat::Png16 => {
                let raw: Vec<u16> = depth
                    .iter()
                    .map(|&d| if d.is_nan() { 0 } else { d.round() as u16 })
                    .collect();
                let img = ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(w as u32, h as u32, raw)
                    .expect("sized buffer");
                let path = dir.join(format!("{stem}d.png"));
                img.save(&path).map_err(|source| Error::Image { path: path.clone(), source })?;
            }
            DepthFormat::PointCloud => {
                let mut text = String::with_capacity(w * h * 32);
                text.push_str("# .PCD v.7 - synthetic\nFIELDS x y z rgb index\nSIZE 4 4 4 4 4\nTYPE F F F F U\n");
                let valid = depth.iter().filter(|d| !d.is_nan()).count();
                let _ = writeln!(text, "WIDTH {valid}\nHEIGHT 1\nPOINTS {valid}\nDATA ascii");
                for (k, &d) in depth.iter().enumerate() {
                    if d.is_nan() {
                        continue;
                    }
                    let (r, c) = (k / w, k % w);
                    let xm = (c as f64 - w as f64 / 2.0) * d / 575.0;
                    let ym = (r as f64 - h as f64 / 2.0) * d / 575.0;
                    let _ = writeln!(text, "{xm:.4} {ym:.4} {d:.4} 0 {k}");
                }
                let path = dir.join(format!("{stem}.txt"));
                fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
        }

        let mut cpos = String::new();
        for r in &positives {
            rect_lines(&mut cpos, r);
        }
        if cfg.nan_rect_items.contains(&i) {
            cpos.push_str("NaN NaN\nNaN NaN\nNaN NaN\nNaN NaN\n");
        }
        let mut cneg = String::new();
        for r in &negatives {
            rect_lines(&mut cneg, r);
        }
        for (suffix, text) in [("cpos", cpos), ("cneg", cneg)] {
            let path = dir.join(format!("{stem}{suffix}.txt"));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        items.push(SynthItem {
            stem,
            object,
            positives,
            negatives,
        });
    }
    Ok(items)
}
