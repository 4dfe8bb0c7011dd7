use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::TrunkConfig;

/// Architecture and geometry of the detector.
///
/// Distances are in pixels of the square preprocessed image. The stage patch
/// covers `stage_fov` pixels around a candidate location and is sampled at
/// `stage_patch × stage_patch`. The classifier patch covers exactly the
/// candidate rectangle and is sampled at `final_patch × final_patch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub num_candidates: usize,
    pub in_channels: usize,
    pub image_size: usize,
    pub stage_fov: f64,
    pub stage_patch: usize,
    pub final_patch: usize,
    /// Gripper opening of the canonical rectangle.
    pub canonical_w: f64,
    /// Plate length of the canonical rectangle.
    pub canonical_h: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Bound on the stage-3 offset, in units of the stage patch half-width.
    pub max_offset: f64,
    /// Bound on stage-1 locations in normalized coordinates.
    pub loc_scale: f64,
    pub stage1: TrunkConfig,
    pub stage2: TrunkConfig,
    pub stage3: TrunkConfig,
    pub classifier: TrunkConfig,
    pub baseline: Option<TrunkConfig>,
}

fn loc_trunk(input_pool: usize, head_pool: usize) -> TrunkConfig {
    TrunkConfig {
        input_pool,
        stem_channels: 16,
        stem_stride: 2,
        stage_channels: vec![16, 32, 64],
        blocks_per_stage: 1,
        head_pool,
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            num_candidates: 4,
            in_channels: 7,
            image_size: 400,
            stage_fov: 200.0,
            stage_patch: 100,
            final_patch: 64,
            canonical_w: 60.0,
            canonical_h: 30.0,
            scale_min: 0.25,
            scale_max: 2.0,
            max_offset: 0.5,
            loc_scale: 0.64,
            stage1: loc_trunk(4, 4),
            stage2: loc_trunk(2, 2),
            stage3: loc_trunk(2, 2),
            classifier: TrunkConfig {
                input_pool: 1,
                stem_channels: 16,
                stem_stride: 2,
                stage_channels: vec![16, 32],
                blocks_per_stage: 1,
                head_pool: 0,
            },
            baseline: Some(TrunkConfig {
                input_pool: 4,
                stem_channels: 16,
                stem_stride: 2,
                stage_channels: vec![16, 32, 64],
                blocks_per_stage: 5,
                head_pool: 0,
            }),
        }
    }
}

impl PipelineConfig {
    /// Ratio of the stage field of view to the image side, i.e. the
    /// normalized half-extent of a stage patch.
    pub fn stage_scale(&self) -> f64 {
        self.stage_fov / self.image_size as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_candidates == 0 {
            return fail("num_candidates must be positive".into());
        }
        if self.in_channels == 0 || self.image_size == 0 || self.stage_patch == 0 || self.final_patch == 0 {
            return fail("channel count and image/patch sizes must be positive".into());
        }
        if !(self.stage_fov > 0.0 && self.stage_fov <= self.image_size as f64) {
            return fail(format!("stage_fov {} must lie in (0, image_size]", self.stage_fov));
        }
        if !(self.canonical_w > 0.0 && self.canonical_h > 0.0) {
            return fail("canonical rectangle sides must be positive".into());
        }
        if !(self.scale_min > 0.0 && self.scale_min < 1.0 && self.scale_max > 1.0 && self.scale_max.is_finite()) {
            return fail(format!(
                "scale range [{}, {}] must contain 1 in its interior with a positive lower end",
                self.scale_min, self.scale_max
            ));
        }
        if !(self.max_offset > 0.0 && self.loc_scale > 0.0) {
            return fail("max_offset and loc_scale must be positive".into());
        }
        let reach = self.loc_scale + self.stage_scale() * self.max_offset * std::f64::consts::SQRT_2;
        if reach >= 1.0 {
            return fail(format!(
                "loc_scale + stage offset reach {reach:.4} must stay below 1 so centers remain inside the image"
            ));
        }
        let checks = [
            ("stage1", &self.stage1, self.image_size),
            ("stage2", &self.stage2, self.stage_patch),
            ("stage3", &self.stage3, self.stage_patch),
            ("classifier", &self.classifier, self.final_patch),
        ];
        for (name, t, size) in checks {
            t.validate(name)?;
            t.feature_dim(size, size)
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        if let Some(b) = &self.baseline {
            b.validate("baseline")?;
            b.feature_dim(self.image_size, self.image_size)
                .map_err(|e| Error::Config(format!("baseline: {e}")))?;
        }
        Ok(())
    }
}
