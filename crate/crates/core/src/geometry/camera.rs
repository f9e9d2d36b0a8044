use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::image::{DepthMap, Mask};
use super::se3::{left_jacobian, skew, Pose};
use crate::error::{Error, Result};

/// Pinhole intrinsics. Pixel centers sit at integer coordinates with the
/// origin at the top-left; `u` is the column and `v` the row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|x| x.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be non-zero"));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::invalid(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Viewing ray through pixel `(u, v)` scaled to unit z.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Pixel coordinates of a camera-frame point, `None` when `z ≤ 0`.
    #[inline]
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    #[inline]
    pub fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }
}

/// Continuous source-image coordinates for every target pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub coords: Vec<(f64, f64)>,
    pub valid: Mask,
}

impl FlowField {
    /// The flow that maps every pixel onto itself.
    pub fn identity(width: usize, height: usize) -> Self {
        let coords = (0..height)
            .flat_map(|v| (0..width).map(move |u| (u as f64, v as f64)))
            .collect();
        FlowField {
            width,
            height,
            coords,
            valid: Mask::filled(width, height, true),
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> (f64, f64) {
        self.coords[v * self.width + u]
    }
}

/// Projection of one target pixel, with derivatives of the source
/// coordinates when requested.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct ProjectedPixel {
    pub u: f64,
    pub v: f64,
    /// Point lands in front of the source camera.
    pub front: bool,
    pub valid: bool,
    /// `∂(u, v)/∂D` where `D` is the target depth at this pixel.
    pub d_depth: [f64; 2],
    /// `∂(u, v)/∂(r, x)` for the relative pose.
    pub d_pose: [[f64; 6]; 2],
}

/// Per-pose quantities shared by all pixels.
pub(crate) struct PoseProjector<'a> {
    k: &'a Intrinsics,
    rot: Matrix3<f64>,
    left_jac: Matrix3<f64>,
    trans: Vector3<f64>,
}

impl<'a> PoseProjector<'a> {
    pub fn new(k: &'a Intrinsics, pose: &Pose) -> Self {
        PoseProjector {
            k,
            rot: pose.rotation_matrix(),
            left_jac: left_jacobian(&pose.rotation),
            trans: pose.translation,
        }
    }

    /// Projects target pixel `(u, v)` at depth `depth` into the source view.
    #[inline]
    pub fn project(&self, u: usize, v: usize, depth: f64, jacobians: bool) -> ProjectedPixel {
        let k = self.k;
        let ray = k.unproject(u as f64, v as f64);
        let rn = self.rot * ray;
        // Y / D, so that the identity pose reproduces the pixel grid exactly.
        let z = rn + self.trans / depth;
        let mut out = ProjectedPixel::default();
        if !(z.z > 0.0) || !z.iter().all(|x| x.is_finite()) {
            out.u = u as f64;
            out.v = v as f64;
            return out;
        }
        out.front = true;
        out.u = u as f64 + k.fx * (z.x / z.z - ray.x);
        out.v = v as f64 + k.fy * (z.y / z.z - ray.y);
        out.valid = k.in_bounds(out.u, out.v);
        if jacobians {
            let y = z * depth;
            let iz = 1.0 / y.z;
            let du_dy = Vector3::new(k.fx * iz, 0.0, -k.fx * y.x * iz * iz);
            let dv_dy = Vector3::new(0.0, k.fy * iz, -k.fy * y.y * iz * iz);
            out.d_depth = [du_dy.dot(&rn), dv_dy.dot(&rn)];
            // ∂Y/∂r = -[R X]× J_l(r), ∂Y/∂x = I
            let d_rot = -skew(&(y - self.trans)) * self.left_jac;
            let gu = d_rot.transpose() * du_dy;
            let gv = d_rot.transpose() * dv_dy;
            out.d_pose = [
                [gu.x, gu.y, gu.z, du_dy.x, du_dy.y, du_dy.z],
                [gv.x, gv.y, gv.z, dv_dy.x, dv_dy.y, dv_dy.z],
            ];
        }
        out
    }
}

/// Maps every target pixel through `depth` and the target-to-source `pose`
/// into continuous source coordinates.
pub fn project(depth: &DepthMap, pose: &Pose, k: &Intrinsics) -> Result<FlowField> {
    k.validate()?;
    depth.field().check_shape(k.width, k.height)?;
    pose.validate()?;
    let projector = PoseProjector::new(k, pose);
    let mut coords = Vec::with_capacity(k.width * k.height);
    let mut valid = Vec::with_capacity(k.width * k.height);
    for v in 0..k.height {
        for u in 0..k.width {
            let p = projector.project(u, v, depth.field().get(u, v), false);
            coords.push((p.u, p.v));
            valid.push(p.valid);
        }
    }
    Ok(FlowField {
        width: k.width,
        height: k.height,
        coords,
        valid: Mask::new(k.width, k.height, valid)?,
    })
}
