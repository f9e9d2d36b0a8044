//! Depth and pose losses for monocular view synthesis.
//!
//! Three training objectives are implemented over dense inverse-depth maps and
//! SE(3) relative poses:
//!
//! * the self-supervised photometric objective (min-over-sources reprojection
//!   error with automasking and edge-aware smoothness),
//! * direct supervision (inverse-depth sub-losses plus weighted pose distances),
//! * the generalized photometric objective, which expresses depth supervision
//!   and pose supervision as photometric errors against reference poses and
//!   reference depth respectively, so no cross-term balancing weights are needed.
//!
//! Instead of training networks, [`optimizer`] recovers depth and pose by
//! direct gradient descent on synthetic scenes from [`synth`], and [`eval`]
//! scores the result with scale-aligned depth metrics and Umeyama-aligned
//! absolute pose errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod optimizer;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{DepthMap, Field, FlowField, Image, Intrinsics, InverseDepthMap, Mask, Pose};
pub use losses::{LossWeights, PixelLossMap, SsimParams};
