use serde::{Deserialize, Serialize};

use crate::geometry::GraspRect;
use crate::stn::AffineTransform2D;
use crate::tensor::Tensor;

pub const TRACE_FORMAT_VERSION: u32 = 1;

/// Stage-3 output for one candidate: scale of the opening (`sw`) and of the
/// plate (`sh`) relative to the canonical rectangle, and the offset
/// `(dx, dy)` in units of the stage patch half-width, in the rotated frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub sw: f64,
    pub sh: f64,
    pub dx: f64,
    pub dy: f64,
}

/// Rectangles decoded from successively longer prefixes of a candidate's
/// transform chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRects {
    pub stage1: GraspRect,
    pub stage2: GraspRect,
    pub stage3: GraspRect,
}

/// Sampled patches of one candidate, `[C, P, P]` each. Not serialized.
#[derive(Debug, Clone)]
pub struct CandidatePatches {
    pub stage1: Tensor,
    pub rotated: Tensor,
    pub final_patch: Tensor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: usize,
    /// Stage-1 location in normalized coordinates.
    pub location: [f64; 2],
    pub location_px: [f64; 2],
    pub theta_deg: f64,
    pub refinement: Refinement,
    pub score: f64,
    pub transforms: [AffineTransform2D; 3],
    pub stage_rects: StageRects,
    pub rect: GraspRect,
    #[serde(skip)]
    pub patches: Option<CandidatePatches>,
}

/// Per-stage outputs for every candidate of one detection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub format_version: u32,
    pub source: String,
    pub image_size: usize,
    pub candidates: Vec<CandidateRecord>,
    pub winner: usize,
}

impl CandidateTrace {
    pub fn winner_record(&self) -> &CandidateRecord {
        &self.candidates[self.winner]
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}
