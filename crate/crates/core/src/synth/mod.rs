//! Procedural scenes with exact depth and pose ground truth.
//!
//! Surfaces carry a view-independent albedo and no shading, so brightness
//! constancy holds exactly between frames and the loss minima coincide with
//! the ground truth up to interpolation error.

mod perturb;
mod scene;
mod texture;

pub use perturb::{perturb, Perturbation};
pub use scene::{relative_pose, render_frames, render_scene, FrameTriplet, RenderedFrame, SceneSpec, Surface};
pub use texture::TextureSpec;
