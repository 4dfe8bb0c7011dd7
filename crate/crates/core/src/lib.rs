//! Classification-based robotic grasp detection with a multi-stage spatial
//! transformer pipeline.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] / [`nn`]: a small reverse-mode differentiable tensor engine,
//!   named parameters, residual blocks.
//! - [`stn`]: affine grids, bilinear sampling, transform algebra and decoding
//!   of a transform chain into a grasp rectangle.
//! - [`geometry`]: the five-dimensional grasp rectangle, rotated-rectangle
//!   Jaccard index and the success criterion.
//! - [`data`]: Cornell-format ingestion, multimodal preprocessing, background
//!   patches, image-wise splits and the preprocessed cache.
//! - [`pipeline`]: the detector (location proposal, rotation, scale/offset
//!   refinement, patch classification, max-pool selection) and a direct
//!   regression baseline.
//! - [`train`]: stage-wise pretraining, back-to-front fine-tuning and
//!   evaluation reports.
//! - [`render`]: PNG overlays of grasp rectangles and trace panels.
//! - [`cli`]: the command implementations behind the `stn-grasp` binary.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod geometry;
pub mod stn;
pub mod nn;
pub mod pipeline;
pub mod render;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
