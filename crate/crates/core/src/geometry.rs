//! Five-dimensional grasp rectangles and the rotated-rectangle success metric.
//!
//! A grasp is `(x, y, θ, w, h)` in image pixels with `y` pointing down. `h`
//! is the length of a gripper plate and `w` the opening between the plates.
//! The plate edge runs along the rectangle's local x axis, which points in
//! direction `(cos θ, sin θ)` in image coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Result};

pub type Point = [f64; 2];

/// Orientation threshold of the success criterion, degrees (strict).
pub const MAX_ANGLE_DIFF_DEG: f64 = 30.0;
/// Jaccard threshold of the success criterion (strict).
pub const MIN_JACCARD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspRect {
    pub x: f64,
    pub y: f64,
    /// Degrees in `[-90, 90)`.
    pub theta: f64,
    pub w: f64,
    pub h: f64,
}

/// Maps any angle in degrees into `[-90, 90)`.
pub fn normalize_angle_deg(theta: f64) -> f64 {
    let t = (theta + 90.0).rem_euclid(180.0) - 90.0;
    // rem_euclid can round up to exactly 180 for tiny negative inputs.
    if t >= 90.0 {
        t - 180.0
    } else {
        t
    }
}

impl GraspRect {
    /// Validated constructor; `theta` is normalized into `[-90, 90)`.
    pub fn new(x: f64, y: f64, theta: f64, w: f64, h: f64) -> Result<Self> {
        if ![x, y, theta, w, h].iter().all(|v| v.is_finite()) {
            return Err(contract_err!("non-finite grasp rectangle ({x}, {y}, {theta}, {w}, {h})"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(contract_err!("grasp rectangle needs w > 0 and h > 0, got w={w}, h={h}"));
        }
        Ok(GraspRect {
            x,
            y,
            theta: normalize_angle_deg(theta),
            w,
            h,
        })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> Point {
        [self.x, self.y]
    }

    /// Corners `p1..p4`; `p1→p2` is a plate of length `h`, `|p2p3| = w`.
    pub fn corners(&self) -> [Point; 4] {
        let (s, c) = self.theta.to_radians().sin_cos();
        let (hh, hw) = (self.h / 2.0, self.w / 2.0);
        [(-hh, -hw), (hh, -hw), (hh, hw), (-hh, hw)]
            .map(|(u, v)| [self.x + c * u - s * v, self.y + s * u + c * v])
    }

    /// Refits a rectangle from four ordered corners under the same convention
    /// as [`GraspRect::corners`]: the centroid gives the center, edge `p1→p2`
    /// gives `θ` and `h`, edge `p2→p3` gives `w`.
    pub fn from_corners(p: &[Point; 4]) -> Result<Self> {
        let cx = p.iter().map(|q| q[0]).sum::<f64>() / 4.0;
        let cy = p.iter().map(|q| q[1]).sum::<f64>() / 4.0;
        let (dx, dy) = (p[1][0] - p[0][0], p[1][1] - p[0][1]);
        let h = dx.hypot(dy);
        let w = (p[2][0] - p[1][0]).hypot(p[2][1] - p[1][1]);
        let theta = dy.atan2(dx).to_degrees();
        GraspRect::new(cx, cy, theta, w, h)
    }

    /// Same rectangle with all coordinates multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        GraspRect {
            x: self.x * s,
            y: self.y * s,
            theta: self.theta,
            w: self.w * s,
            h: self.h * s,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        GraspRect {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

pub fn rect_corners(r: &GraspRect) -> [Point; 4] {
    r.corners()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Signed shoelace area; positive for counter-clockwise order (y up).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    let (r, s) = ([q[0] - p[0], q[1] - p[1]], [b[0] - a[0], b[1] - a[1]]);
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom == 0.0 {
        return q;
    }
    let t = ((a[0] - p[0]) * s[1] - (a[1] - p[1]) * s[0]) / denom;
    [p[0] + t * r[0], p[1] + t * r[1]]
}

/// Sutherland–Hodgman clipping of `subject` against the convex polygon `clip`.
/// Both polygons must have positive orientation.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % m]);
        let input = std::mem::take(&mut output);
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let prev = input[(j + n - 1) % n];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn oriented(r: &GraspRect) -> Vec<Point> {
    let mut c = r.corners().to_vec();
    if polygon_area(&c) < 0.0 {
        c.reverse();
    }
    c
}

/// Jaccard index (intersection over union) of two rotated rectangles.
pub fn jaccard(a: &GraspRect, b: &GraspRect) -> Result<f64> {
    for r in [a, b] {
        if !(r.w > 0.0 && r.h > 0.0) || !r.x.is_finite() || !r.y.is_finite() || !r.theta.is_finite() {
            return Err(contract_err!("degenerate rectangle {r:?}"));
        }
    }
    let (pa, pb) = (oriented(a), oriented(b));
    let inter = polygon_area(&clip_convex(&pa, &pb)).max(0.0);
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Smallest difference between two grasp orientations, in `[0, 90]` degrees.
/// Orientations are equivalent modulo 180°.
pub fn angle_diff(t1: f64, t2: f64) -> f64 {
    let d = (t1 - t2).abs().rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Outcome of matching a prediction against ground truths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessMatch {
    pub success: bool,
    /// Ground truth with the largest Jaccard among the angle-qualified ones.
    pub best_index: Option<usize>,
    pub best_jaccard: f64,
}

/// Success criterion: some ground truth with orientation difference below
/// 30° and Jaccard index above 0.25. Both comparisons are strict.
pub fn is_success(pred: &GraspRect, ground_truths: &[GraspRect]) -> Result<SuccessMatch> {
    if ground_truths.is_empty() {
        return Err(contract_err!("is_success needs at least one ground truth"));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, gt) in ground_truths.iter().enumerate() {
        if angle_diff(pred.theta, gt.theta) >= MAX_ANGLE_DIFF_DEG {
            continue;
        }
        let j = jaccard(pred, gt)?;
        if best.map_or(true, |(_, bj)| j > bj) {
            best = Some((i, j));
        }
    }
    Ok(match best {
        Some((i, j)) => SuccessMatch {
            success: j > MIN_JACCARD,
            best_index: Some(i),
            best_jaccard: j,
        },
        None => SuccessMatch {
            success: false,
            best_index: None,
            best_jaccard: 0.0,
        },
    })
}
