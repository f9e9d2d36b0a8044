//! Pinhole camera, SE(3) poses, projection, and bilinear view synthesis.

mod camera;
mod image;
mod sample;
mod se3;

pub use camera::{project, FlowField, Intrinsics};
pub use image::{DepthMap, Field, Image, InverseDepthMap, Mask};
pub use sample::{bilinear_sample, warp};
pub use se3::{axis_angle_to_matrix, matrix_to_axis_angle, skew, Pose};

pub(crate) use camera::{PoseProjector, ProjectedPixel};
pub(crate) use sample::sample_with_grad;
