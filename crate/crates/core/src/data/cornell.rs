//! Cornell grasp dataset layout.
//!
//! Each item `pcdNNNN` consists of
//! - `pcdNNNNr.png`: RGB image,
//! - `pcdNNNN.txt`: ASCII point cloud (`x y z rgb index` per point, index =
//!   row · width + col), or alternatively `pcdNNNNd.png`: 16-bit depth in
//!   millimetres with 0 marking holes,
//! - `pcdNNNNcpos.txt` / `pcdNNNNcneg.txt`: graspable / non-graspable
//!   rectangles, four `x y` lines per rectangle.
//!
//! Items may sit directly in the root or in nested folders.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use super::preprocess::{preprocess, RawFrame};
use super::GraspSample;
use crate::error::{Error, Result};
use crate::geometry::GraspRect;

/// Rectangles read from one annotation file plus per-rectangle warnings.
#[derive(Debug, Clone, Default)]
pub struct ParsedRects {
    pub rects: Vec<GraspRect>,
    pub warnings: Vec<String>,
}

/// Parses annotation text: every consecutive group of four `x y` lines is
/// one rectangle, vertices in order with `p1→p2` taken as a gripper plate.
pub fn parse_rect_text(text: &str, origin: &str) -> ParsedRects {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let mut out = ParsedRects::default();
    let full = lines.len() / 4 * 4;
    if full != lines.len() {
        out.warnings.push(format!(
            "{origin}: {} trailing line(s) do not form a complete rectangle",
            lines.len() - full
        ));
    }
    'groups: for (gi, group) in lines[..full].chunks(4).enumerate() {
        let mut pts = [[0.0; 2]; 4];
        for (k, (lineno, line)) in group.iter().enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let parsed: Option<Vec<f64>> = (toks.len() == 2)
                .then(|| toks.iter().map(|t| t.parse::<f64>().ok()).collect())
                .flatten();
            match parsed {
                Some(v) if v.iter().all(|x| x.is_finite()) => pts[k] = [v[0], v[1]],
                Some(_) => {
                    out.warnings.push(format!(
                        "{origin}:{}: rectangle {gi} has a non-finite coordinate; skipped",
                        lineno + 1
                    ));
                    continue 'groups;
                }
                None => {
                    out.warnings.push(format!(
                        "{origin}:{}: cannot parse {:?}; rectangle {gi} skipped",
                        lineno + 1,
                        line
                    ));
                    continue 'groups;
                }
            }
        }
        match GraspRect::from_corners(&pts) {
            Ok(r) => out.rects.push(r),
            Err(e) => out
                .warnings
                .push(format!("{origin}: rectangle {gi} is degenerate ({e}); skipped")),
        }
    }
    out
}

pub fn parse_rect_file(path: &Path) -> Result<ParsedRects> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_rect_text(&text, &path.display().to_string()))
}

/// Counts reported by [`load_cornell`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct LoadReport {
    pub images: usize,
    pub positives: usize,
    pub negatives: usize,
    pub skipped_samples: usize,
    pub skipped_rectangles: usize,
    pub warnings: Vec<String>,
}

fn read_png_rgb(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb8();
    Ok((rgb.width() as usize, rgb.height() as usize, rgb.into_raw()))
}

fn read_depth_png(path: &Path, w: usize, h: usize) -> Result<Vec<f64>> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let d = img.to_luma16();
    if d.width() as usize != w || d.height() as usize != h {
        return Err(Error::Input(format!(
            "{}: depth is {}x{}, image is {w}x{h}",
            path.display(),
            d.width(),
            d.height()
        )));
    }
    Ok(d.into_raw()
        .into_iter()
        .map(|v| if v == 0 { f64::NAN } else { v as f64 })
        .collect())
}

/// Rasterizes an ASCII point cloud into a depth map using each point's
/// pixel index; `z` is taken as depth. Pixels without a point stay NaN.
fn read_point_cloud(path: &Path, w: usize, h: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut depth = vec![f64::NAN; w * h];
    for line in text.lines() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 {
            continue;
        }
        let (Ok(z), Ok(idx)) = (toks[2].parse::<f64>(), toks[4].parse::<usize>()) else {
            continue;
        };
        if toks[0].parse::<f64>().is_err() {
            continue;
        }
        if idx < w * h && z.is_finite() {
            depth[idx] = z;
        }
    }
    Ok(depth)
}

/// Loads the RGB image and depth map for item `stem` in `dir`.
pub fn read_frame(rgb_path: &Path, depth_path: &Path) -> Result<RawFrame> {
    let (width, height, rgb) = read_png_rgb(rgb_path)?;
    let depth = match depth_path.extension().and_then(|e| e.to_str()) {
        Some("png") => read_depth_png(depth_path, width, height)?,
        _ => read_point_cloud(depth_path, width, height)?,
    };
    Ok(RawFrame {
        width,
        height,
        rgb,
        depth,
    })
}

fn collect_annotations(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_annotations(&path, out)?;
        } else if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with("cpos.txt"))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Loads every item under `root`, ordered by file path.
///
/// A missing RGB or depth file is a hard error. An unreadable annotation
/// file skips the item; malformed or NaN rectangles are skipped individually.
pub fn load_cornell(root: &Path) -> Result<(Vec<GraspSample>, LoadReport)> {
    if !root.is_dir() {
        return Err(Error::Input(format!("{} is not a readable directory", root.display())));
    }
    let mut cpos_files = Vec::new();
    collect_annotations(root, &mut cpos_files)?;
    cpos_files.sort();

    let mut report = LoadReport::default();
    let mut samples = Vec::new();
    for cpos in cpos_files {
        let name = cpos.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let stem = name.trim_end_matches("cpos.txt").to_string();
        let dir = cpos.parent().unwrap_or(root);
        let rgb_path = dir.join(format!("{stem}r.png"));
        if !rgb_path.is_file() {
            return Err(Error::Input(format!("missing image file {}", rgb_path.display())));
        }
        let depth_path = [format!("{stem}d.png"), format!("{stem}.txt")]
            .into_iter()
            .map(|f| dir.join(f))
            .find(|p| p.is_file())
            .ok_or_else(|| Error::Input(format!("missing depth for {}", rgb_path.display())))?;

        let cneg = dir.join(format!("{stem}cneg.txt"));
        let parsed = parse_rect_file(&cpos).and_then(|p| Ok((p, parse_rect_file(&cneg)?)));
        let (pos, neg) = match parsed {
            Ok(v) => v,
            Err(e) => {
                let msg = format!("{stem}: annotation unreadable ({e}); item skipped");
                warn!("{msg}");
                report.warnings.push(msg);
                report.skipped_samples += 1;
                continue;
            }
        };
        for w in pos.warnings.iter().chain(&neg.warnings) {
            warn!("{w}");
        }
        report.skipped_rectangles += pos.warnings.len() + neg.warnings.len();
        report.warnings.extend(pos.warnings);
        report.warnings.extend(neg.warnings);

        let frame = read_frame(&rgb_path, &depth_path)?;
        let sample = preprocess(&stem, &frame, &pos.rects, &neg.rects)?;
        report.images += 1;
        report.positives += sample.positives.len();
        report.negatives += sample.negatives.len();
        samples.push(sample);
    }
    info!(
        "loaded {} images ({} positives, {} negatives); skipped {} items and {} rectangles",
        report.images, report.positives, report.negatives, report.skipped_samples, report.skipped_rectangles
    );
    Ok((samples, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_rect() {
        let p = parse_rect_text("0 0\n4 0\n4 2\n0 2\n", "t");
        assert_eq!(p.rects, vec![GraspRect::new(2.0, 1.0, 0.0, 2.0, 4.0).unwrap()]);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn empty_text() {
        let p = parse_rect_text("", "t");
        assert!(p.rects.is_empty() && p.warnings.is_empty());
    }

    #[test]
    fn nan_group_skipped_with_warning() {
        let p = parse_rect_text("NaN NaN\n4 0\n4 2\n0 2\n0 0\n4 0\n4 2\n0 2\n", "t");
        assert_eq!(p.rects.len(), 1);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn bad_token_reports_line() {
        let p = parse_rect_text("0 0\n4 x\n4 2\n0 2\n", "f.txt");
        assert!(p.rects.is_empty());
        assert!(p.warnings[0].contains("f.txt:2"));
    }

    #[test]
    fn partial_group_rejected() {
        let p = parse_rect_text("0 0\n4 0\n4 2\n0 2\n1 1\n2 2\n", "t");
        assert_eq!(p.rects.len(), 1);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn missing_root_is_input_error() {
        assert!(matches!(
            load_cornell(Path::new("/definitely/not/here")),
            Err(Error::Input(_))
        ));
    }
}
