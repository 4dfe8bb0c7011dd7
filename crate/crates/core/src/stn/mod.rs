//! Spatial-transformer machinery: affine transforms in normalized
//! coordinates, grid generation, bilinear sampling, and decoding of a stage
//! transform chain into a grasp rectangle.
//!
//! Normalized coordinates use the align-corners convention for sampling:
//! `-1` is the centre of the first pixel and `+1` the centre of the last.
//! An affine transform maps output coordinates `(x_o, y_o, 1)` to input
//! coordinates.

mod affine;
mod sampler;

pub use affine::{compose, transform_to_grasp, AffineTransform2D, TransformKind};
pub use sampler::{affine_grid, affine_grid_batch, bilinear_sample, compose_batch, grid_sample, SamplingGrid};
