use log::warn;

use crate::data::GraspSample;
use crate::geometry::GraspRect;
use crate::pipeline::PipelineConfig;

/// Targets are kept this far inside the open output ranges of the bounded
/// heads so that they stay reachable.
const RANGE_MARGIN: f64 = 0.98;

/// One classifier training example: the patch covering `rect`, and its label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierExample {
    pub rect: GraspRect,
    pub label: f64,
}

/// Supervision for every block derived from one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTargets {
    /// Normalized `(tx, ty)` per candidate slot; `(0, 0)` for masked slots.
    pub locations: Vec<[f64; 2]>,
    pub mask: Vec<bool>,
    /// Radians per slot; 0 for masked slots.
    pub thetas: Vec<f64>,
    /// `(sw, sh, dx, dy)` per slot relative to the slot's own centre.
    pub refinements: Vec<[f64; 4]>,
    pub slot_rects: Vec<Option<GraspRect>>,
    /// Positives not assigned to a slot.
    pub extra_positives: Vec<GraspRect>,
    pub classifier_examples: Vec<ClassifierExample>,
}

impl StageTargets {
    pub fn location_flat(&self) -> Vec<f64> {
        self.locations.iter().flatten().copied().collect()
    }

    /// Per-coordinate mask matching [`Self::location_flat`].
    pub fn location_mask_flat(&self) -> Vec<f64> {
        self.mask
            .iter()
            .flat_map(|&m| [f64::from(u8::from(m)); 2])
            .collect()
    }

    /// Every positive rectangle: slotted ones first, then extras.
    pub fn all_positives(&self) -> impl Iterator<Item = (Option<usize>, &GraspRect)> {
        self.slot_rects
            .iter()
            .enumerate()
            .filter_map(|(k, r)| r.as_ref().map(|r| (Some(k), r)))
            .chain(self.extra_positives.iter().map(|r| (None, r)))
    }
}

/// Pixel → normalized coordinate (`0 ↔ −1`, `size ↔ +1`).
pub fn to_normalized(p: f64, size: f64) -> f64 {
    2.0 * p / size - 1.0
}

/// Sorts positives by Euclidean distance of their centre to the top-right
/// pixel `(W − 1, 0)`, ascending; equal distances keep file order.
pub fn sort_top_right(rects: &[GraspRect], width: usize) -> Vec<GraspRect> {
    let corner = [width as f64 - 1.0, 0.0];
    let mut out = rects.to_vec();
    out.sort_by(|a, b| {
        let da = (a.x - corner[0]).hypot(a.y - corner[1]);
        let db = (b.x - corner[0]).hypot(b.y - corner[1]);
        da.total_cmp(&db)
    });
    out
}

fn clamp_scale(s: f64, cfg: &PipelineConfig) -> f64 {
    let lo = 1.0 - RANGE_MARGIN * (1.0 - cfg.scale_min);
    let hi = 1.0 + RANGE_MARGIN * (cfg.scale_max - 1.0);
    s.clamp(lo, hi)
}

/// Stage-3 target for `rect` when the rotated patch is centred at the
/// normalized location `crop`: scales relative to the canonical rectangle
/// and the centre offset expressed in the rotated frame, in units of the
/// stage patch half-width.
pub fn refinement_target(rect: &GraspRect, crop: [f64; 2], cfg: &PipelineConfig) -> [f64; 4] {
    let s = cfg.image_size as f64;
    let (cx, cy) = (to_normalized(rect.x, s) - crop[0], to_normalized(rect.y, s) - crop[1]);
    let (sin, cos) = rect.theta.to_radians().sin_cos();
    let unit = cfg.stage_scale();
    let lim = RANGE_MARGIN * cfg.max_offset;
    let dx = ((cos * cx + sin * cy) / unit).clamp(-lim, lim);
    let dy = ((-sin * cx + cos * cy) / unit).clamp(-lim, lim);
    [
        clamp_scale(rect.w / cfg.canonical_w, cfg),
        clamp_scale(rect.h / cfg.canonical_h, cfg),
        dx,
        dy,
    ]
}

/// Fixed canonical-size rectangles used as negatives on background patches.
fn background_rects(cfg: &PipelineConfig) -> Vec<GraspRect> {
    let s = cfg.image_size as f64;
    [(0.5, 0.5, 0.0), (0.35, 0.35, 45.0), (0.65, 0.35, -45.0), (0.35, 0.65, -90.0), (0.65, 0.65, 30.0)]
        .iter()
        .map(|&(fx, fy, t)| {
            GraspRect::new(fx * s, fy * s, t, cfg.canonical_w, cfg.canonical_h).expect("positive sizes")
        })
        .collect()
}

/// Builds per-block supervision for one sample.
///
/// Positives sorted by distance to the top-right corner fill the candidate
/// slots in order; missing slots are masked with zero targets, surplus
/// positives only serve as classifier positives. Returns `None` (with a
/// warning) for a non-background sample without positives.
pub fn make_stage_targets(sample: &GraspSample, cfg: &PipelineConfig) -> Option<StageTargets> {
    let k = cfg.num_candidates;
    let s = cfg.image_size as f64;
    if sample.positives.is_empty() && !sample.is_background {
        warn!("{}: no positive rectangles; excluded from stage training", sample.id);
        return None;
    }
    let sorted = sort_top_right(&sample.positives, sample.image.width);
    let lim = RANGE_MARGIN * cfg.loc_scale;
    let mut t = StageTargets {
        locations: vec![[0.0; 2]; k],
        mask: vec![false; k],
        thetas: vec![0.0; k],
        refinements: vec![[0.0; 4]; k],
        slot_rects: vec![None; k],
        extra_positives: Vec::new(),
        classifier_examples: Vec::new(),
    };
    for (i, r) in sorted.iter().enumerate() {
        if i < k {
            let loc = [
                to_normalized(r.x, s).clamp(-lim, lim),
                to_normalized(r.y, s).clamp(-lim, lim),
            ];
            t.locations[i] = loc;
            t.mask[i] = true;
            t.thetas[i] = r.theta.to_radians();
            t.refinements[i] = refinement_target(r, loc, cfg);
            t.slot_rects[i] = Some(*r);
        } else {
            t.extra_positives.push(*r);
        }
        t.classifier_examples.push(ClassifierExample { rect: *r, label: 1.0 });
    }
    let negatives = if sample.is_background {
        background_rects(cfg)
    } else {
        sample.negatives.clone()
    };
    t.classifier_examples
        .extend(negatives.into_iter().map(|rect| ClassifierExample { rect, label: 0.0 }));
    Some(t)
}
