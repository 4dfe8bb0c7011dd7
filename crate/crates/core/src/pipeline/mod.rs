//! The multi-stage detector: candidate locations, per-candidate rotation,
//! scale/offset refinement, patch classification and max-score selection,
//! plus a direct-regression baseline head.
//!
//! Every candidate carries a chain of three affine transforms in normalized
//! image coordinates: a translation `T`, a rotation `R` and a
//! scale+translation `S`. Stage networks look at patches sampled from the
//! full image through the composed chain, and the final rectangle is the
//! image of the canonical rectangle under `T · R · S`.

mod config;
mod model;
mod trace;

pub use config::PipelineConfig;
pub use model::{Block, GraspModel, PipelineForward, Stage1Output, Stage2Output, Stage3Output};
pub use trace::{
    CandidatePatches, CandidateRecord, CandidateTrace, Refinement, StageRects, TRACE_FORMAT_VERSION,
};

use crate::error::Result;
use crate::tensor::Tensor;

fn column(g: usize, v: f64) -> Tensor {
    Tensor::full(&[g, 1], v)
}

/// `[G, 2]` locations to translation coefficient rows `[G, 6]`.
pub fn translation_rows(loc: &Tensor) -> Result<Tensor> {
    let g = loc.shape()[0];
    let (one, zero) = (column(g, 1.0), column(g, 0.0));
    let (tx, ty) = (loc.narrow_cols(0, 1)?, loc.narrow_cols(1, 1)?);
    Tensor::concat_cols(&[&one, &zero, &tx, &zero, &one, &ty])
}

/// `[G, 1]` angles in radians to rotation coefficient rows `[G, 6]`.
pub fn rotation_rows(theta: &Tensor) -> Result<Tensor> {
    let g = theta.shape()[0];
    let zero = column(g, 0.0);
    let (c, s) = (theta.cos()?, theta.sin()?);
    let ns = s.neg()?;
    Tensor::concat_cols(&[&c, &ns, &zero, &s, &c, &zero])
}

/// `[G, 4]` refinements `(sw, sh, dx, dy)` to scale+translation rows. The
/// plate direction is the local x axis, so `sh` scales x and `sw` scales y.
/// Offsets are multiplied by `offset_unit` to become normalized coordinates.
pub fn scale_rows(refinement: &Tensor, offset_unit: f64) -> Result<Tensor> {
    let g = refinement.shape()[0];
    let zero = column(g, 0.0);
    let sw = refinement.narrow_cols(0, 1)?;
    let sh = refinement.narrow_cols(1, 1)?;
    let dx = refinement.narrow_cols(2, 1)?.scale(offset_unit)?;
    let dy = refinement.narrow_cols(3, 1)?.scale(offset_unit)?;
    Tensor::concat_cols(&[&sh, &zero, &dx, &zero, &sw, &dy])
}

/// Constant rows `[G, 6]` of the diagonal map `diag(sx, sy)`.
pub fn diagonal_rows(g: usize, sx: f64, sy: f64) -> Tensor {
    let row = [sx, 0.0, 0.0, 0.0, sy, 0.0];
    Tensor::new(&[g, 6], row.iter().copied().cycle().take(6 * g).collect()).expect("sized rows")
}
