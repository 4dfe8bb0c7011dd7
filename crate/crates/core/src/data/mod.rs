//! Cornell-format grasp data: ingestion, multimodal preprocessing,
//! background patches, image-wise splits and the preprocessed cache.

mod background;
mod cache;
mod cornell;
mod normals;
mod preprocess;
mod split;
pub mod synth;

pub use background::make_background_patches;
pub use cache::{read_cache, write_cache, CACHE_FORMAT_VERSION};
pub use cornell::{load_cornell, parse_rect_file, parse_rect_text, read_frame, LoadReport, ParsedRects};
pub use normals::surface_normals;
pub use preprocess::{fill_depth_holes, preprocess, RawFrame};
pub use split::{split_imagewise, DatasetSplit};

use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Result};
use crate::geometry::GraspRect;
use crate::tensor::Tensor;

/// Side length of the square crop every sample is reduced to.
pub const CROP_SIZE: usize = 400;
/// Channel order: R, G, B, depth, nx, ny, nz.
pub const NUM_CHANNELS: usize = 7;

/// Provenance of a preprocessed image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    /// Identifier of the source image; all samples derived from one source share it.
    pub source: String,
    /// Top-left corner of the crop in the raw frame, `(x, y)` pixels.
    pub crop_offset: [usize; 2],
}

/// Seven-channel image stack `[R, G, B, depth, nx, ny, nz]`, stored at `f32`
/// precision in channel-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalImage {
    pub height: usize,
    pub width: usize,
    pub channels: Vec<f32>,
    pub meta: ImageMeta,
}

impl MultiModalImage {
    pub fn new(height: usize, width: usize, channels: Vec<f32>, meta: ImageMeta) -> Result<Self> {
        if channels.len() != NUM_CHANNELS * height * width {
            return Err(contract_err!(
                "multimodal image {height}x{width} needs {} values, got {}",
                NUM_CHANNELS * height * width,
                channels.len()
            ));
        }
        Ok(MultiModalImage {
            height,
            width,
            channels,
            meta,
        })
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.channels[c * n..(c + 1) * n]
    }

    /// `[1, 7, H, W]` tensor without gradient tracking.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            &[1, NUM_CHANNELS, self.height, self.width],
            self.channels.iter().map(|&v| v as f64).collect(),
        )
        .expect("length checked at construction")
    }

    /// Checks the preprocessing invariants: finite values, RGB in `[0, 1]`,
    /// unit-norm normals.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.channels.iter().position(|v| !v.is_finite()) {
            return Err(contract_err!("non-finite channel value at flat index {i}"));
        }
        for c in 0..3 {
            if self.plane(c).iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(contract_err!("RGB channel {c} outside [0, 1]"));
            }
        }
        let (nx, ny, nz) = (self.plane(4), self.plane(5), self.plane(6));
        for i in 0..self.height * self.width {
            let n = (nx[i] as f64).hypot(ny[i] as f64).hypot(nz[i] as f64);
            if (n - 1.0).abs() > 1e-6 {
                return Err(contract_err!("normal at pixel {i} has norm {n}"));
            }
        }
        Ok(())
    }
}

/// One dataset record.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspSample {
    pub id: String,
    pub image: MultiModalImage,
    pub positives: Vec<GraspRect>,
    pub negatives: Vec<GraspRect>,
    pub is_background: bool,
}

impl GraspSample {
    pub fn source(&self) -> &str {
        &self.image.meta.source
    }

    pub fn validate(&self) -> Result<()> {
        self.image.validate()?;
        if self.is_background && !self.positives.is_empty() {
            return Err(contract_err!("background sample {} has positives", self.id));
        }
        let (w, h) = (self.image.width as f64, self.image.height as f64);
        for r in self.positives.iter().chain(&self.negatives) {
            if !(0.0..w).contains(&r.x) || !(0.0..h).contains(&r.y) {
                return Err(contract_err!("rectangle center ({}, {}) outside the crop", r.x, r.y));
            }
        }
        Ok(())
    }
}
