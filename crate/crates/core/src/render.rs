//! PNG overlays of grasp rectangles with JSON metadata sidecars.
//!
//! Plate edges (`p1→p2`, `p3→p4`) and opening edges (`p2→p3`, `p4→p1`) are
//! drawn in different colours; the centre is marked with a dot.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::data::MultiModalImage;
use crate::error::{Error, Result};
use crate::geometry::{GraspRect, Point};
use crate::pipeline::CandidateTrace;

pub const OVERLAY_FORMAT_VERSION: u32 = 1;

/// Names of the trace panels, in output order.
pub const TRACE_PANELS: [&str; 4] = ["stage1_locations", "stage2_rotated", "stage3_refined", "winner"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayStyle {
    pub plate: [u8; 3],
    pub opening: [u8; 3],
    pub center: [u8; 3],
    /// Line thickness in pixels.
    pub thickness: usize,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        OverlayStyle {
            plate: [0, 200, 0],
            opening: [255, 220, 0],
            center: [230, 0, 0],
            thickness: 2,
        }
    }
}

/// What a panel shows, sufficient to redraw it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayMeta {
    pub format_version: u32,
    pub panel: String,
    pub style: OverlayStyle,
    pub rects: Vec<GraspRect>,
    pub points: Vec<Point>,
}

/// The RGB channels of a preprocessed image as an 8-bit picture.
pub fn base_image(img: &MultiModalImage) -> RgbImage {
    let (w, h) = (img.width, img.height);
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let k = y as usize * w + x as usize;
        let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([q(r[k]), q(g[k]), q(b[k])])
    })
}

fn put(canvas: &mut RgbImage, x: i64, y: i64, colour: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < canvas.width() && (y as u32) < canvas.height() {
        canvas.put_pixel(x as u32, y as u32, Rgb(colour));
    }
}

fn dot(canvas: &mut RgbImage, p: Point, radius: usize, colour: [u8; 3]) {
    let r = radius as i64;
    let (cx, cy) = (p[0].round() as i64, p[1].round() as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                put(canvas, cx + dx, cy + dy, colour);
            }
        }
    }
}

/// Draws a segment with square pen of side `thickness`.
pub fn draw_line(canvas: &mut RgbImage, a: Point, b: Point, thickness: usize, colour: [u8; 3]) {
    let steps = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil().max(1.0) as usize;
    let lo = -((thickness.max(1) as i64 - 1) / 2);
    let hi = lo + thickness.max(1) as i64;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (a[0] + t * (b[0] - a[0])).round() as i64;
        let y = (a[1] + t * (b[1] - a[1])).round() as i64;
        for oy in lo..hi {
            for ox in lo..hi {
                put(canvas, x + ox, y + oy, colour);
            }
        }
    }
}

pub fn draw_grasp(canvas: &mut RgbImage, rect: &GraspRect, style: &OverlayStyle) {
    let p = rect.corners();
    draw_line(canvas, p[1], p[2], style.thickness, style.opening);
    draw_line(canvas, p[3], p[0], style.thickness, style.opening);
    draw_line(canvas, p[0], p[1], style.thickness, style.plate);
    draw_line(canvas, p[2], p[3], style.thickness, style.plate);
    dot(canvas, rect.center(), style.thickness + 1, style.center);
}

/// Draws everything listed in `meta` onto a copy of `base`.
pub fn render(base: &RgbImage, meta: &OverlayMeta) -> RgbImage {
    let mut canvas = base.clone();
    for r in &meta.rects {
        draw_grasp(&mut canvas, r, &meta.style);
    }
    for p in &meta.points {
        dot(&mut canvas, *p, meta.style.thickness + 2, meta.style.center);
    }
    canvas
}

pub fn detection_meta(rect: &GraspRect, style: &OverlayStyle) -> OverlayMeta {
    OverlayMeta {
        format_version: OVERLAY_FORMAT_VERSION,
        panel: "detection".into(),
        style: *style,
        rects: vec![*rect],
        points: Vec::new(),
    }
}

/// Metadata of the four trace panels: stage-1 locations, stage-2 rotated
/// canonical rectangles, stage-3 refined rectangles and the winner.
pub fn trace_metas(trace: &CandidateTrace, style: &OverlayStyle) -> Vec<OverlayMeta> {
    let meta = |panel: &str, rects: Vec<GraspRect>, points: Vec<Point>| OverlayMeta {
        format_version: OVERLAY_FORMAT_VERSION,
        panel: panel.into(),
        style: *style,
        rects,
        points,
    };
    let c = &trace.candidates;
    vec![
        meta(TRACE_PANELS[0], Vec::new(), c.iter().map(|r| r.location_px).collect()),
        meta(TRACE_PANELS[1], c.iter().map(|r| r.stage_rects.stage2).collect(), Vec::new()),
        meta(TRACE_PANELS[2], c.iter().map(|r| r.stage_rects.stage3).collect(), Vec::new()),
        meta(TRACE_PANELS[3], vec![trace.winner_record().rect], Vec::new()),
    ]
}

/// Writes `{panel}.png` and `{panel}.json` into `dir`; returns both paths.
pub fn write_panel(dir: &Path, base: &RgbImage, meta: &OverlayMeta) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let png = dir.join(format!("{}.png", meta.panel));
    let json = dir.join(format!("{}.json", meta.panel));
    render(base, meta)
        .save(&png)
        .map_err(|e| Error::Input(format!("cannot write {}: {e}", png.display())))?;
    fs::write(&json, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(&json, e))?;
    Ok((png, json))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank() -> RgbImage {
        RgbImage::from_pixel(100, 100, Rgb([255, 255, 255]))
    }

    #[test]
    fn plate_and_opening_edges_differ() {
        let style = OverlayStyle::default();
        let r = GraspRect::new(50.0, 50.0, 0.0, 40.0, 20.0).unwrap();
        let mut c = blank();
        draw_grasp(&mut c, &r, &style);
        // Plates run along x at y = 50 ± 20, openings along y at x = 50 ± 10.
        assert_eq!(c.get_pixel(50, 30).0, style.plate);
        assert_eq!(c.get_pixel(50, 70).0, style.plate);
        assert_eq!(c.get_pixel(40, 50).0, style.opening);
        assert_eq!(c.get_pixel(60, 50).0, style.opening);
        assert_eq!(c.get_pixel(50, 50).0, style.center);
        assert_eq!(c.get_pixel(5, 5).0, [255, 255, 255]);
    }

    #[test]
    fn render_is_deterministic() {
        let meta = detection_meta(&GraspRect::new(30.0, 60.0, 33.0, 25.0, 12.0).unwrap(), &OverlayStyle::default());
        assert_eq!(render(&blank(), &meta), render(&blank(), &meta));
    }

    #[test]
    fn out_of_canvas_drawing_is_clipped() {
        let mut c = blank();
        draw_line(&mut c, [-50.0, -50.0], [150.0, 150.0], 3, [1, 2, 3]);
        assert_eq!(c.get_pixel(99, 99).0, [1, 2, 3]);
    }
}
