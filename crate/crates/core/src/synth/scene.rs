use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::texture::TextureSpec;
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Field, Image, Intrinsics, Pose};
use crate::losses::{Estimate, Frames};

/// Scene geometry in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Surface {
    /// The plane `z = distance`.
    Plane { distance: f64 },
    /// Plane through `(0, 0, distance)` whose normal is `+z` rotated by
    /// `tilt_x` about x, then `tilt_y` about y (radians).
    SlantedPlane { distance: f64, tilt_x: f64, tilt_y: f64 },
    /// Outside of a sphere.
    SpherePatch { center: [f64; 3], radius: f64 },
}

impl Surface {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Surface::Plane { distance } => distance.is_finite(),
            Surface::SlantedPlane { distance, tilt_x, tilt_y } => {
                distance.is_finite() && tilt_x.abs() < 1.5 && tilt_y.abs() < 1.5
            }
            Surface::SpherePatch { center, radius } => center.iter().all(|c| c.is_finite()) && radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid surface {self:?}")))
        }
    }

    fn plane(&self) -> Option<(Vector3<f64>, f64)> {
        match *self {
            Surface::Plane { distance } => Some((Vector3::z(), distance)),
            Surface::SlantedPlane { distance, tilt_x, tilt_y } => {
                let n = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), tilt_y)
                    * nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), tilt_x)
                    * Vector3::z();
                Some((n, n.z * distance))
            }
            Surface::SpherePatch { .. } => None,
        }
    }

    /// Ray parameter `s > 0` of the first hit along `origin + s · dir`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        if let Some((n, offset)) = self.plane() {
            let denom = n.dot(dir);
            if denom == 0.0 {
                return None;
            }
            let s = (offset - n.dot(origin)) / denom;
            return (s > 0.0 && s.is_finite()).then_some(s);
        }
        let Surface::SpherePatch { center, radius } = *self else {
            unreachable!()
        };
        let oc = origin - Vector3::from(center);
        let a = dir.norm_squared();
        let b = oc.dot(dir);
        let c = oc.norm_squared() - radius * radius;
        let disc = b * b - a * c;
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        // numerically stable pair of roots
        let q = -(b + b.signum() * root);
        let (s0, s1) = if q != 0.0 { (q / a, c / q) } else { (0.0, 0.0) };
        let (near, far) = if s0 < s1 { (s0, s1) } else { (s1, s0) };
        if near > 0.0 {
            Some(near)
        } else if far > 0.0 && c > 0.0 {
            Some(far)
        } else {
            None
        }
    }
}

/// Everything needed to render a synthetic sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub surface: Surface,
    pub texture: TextureSpec,
    /// Absolute world-from-camera poses.
    pub trajectory: Vec<Pose>,
    pub intrinsics: Intrinsics,
    pub channels: usize,
}

impl Default for SceneSpec {
    /// Fronto-parallel textured plane at distance 2 seen by a camera moving
    /// 0.1 units along x per frame.
    fn default() -> Self {
        SceneSpec {
            surface: Surface::Plane { distance: 2.0 },
            texture: TextureSpec::default(),
            trajectory: vec![
                Pose::from_translation(-0.1, 0.0, 0.0),
                Pose::identity(),
                Pose::from_translation(0.1, 0.0, 0.0),
            ],
            intrinsics: Intrinsics {
                fx: 64.0,
                fy: 64.0,
                cx: 31.5,
                cy: 31.5,
                width: 64,
                height: 64,
            },
            channels: 1,
        }
    }
}

impl SceneSpec {
    /// Same scene at a different resolution, keeping the field of view.
    pub fn resized(&self, width: usize, height: usize) -> SceneSpec {
        let k = &self.intrinsics;
        let sx = width as f64 / k.width as f64;
        let sy = height as f64 / k.height as f64;
        SceneSpec {
            intrinsics: Intrinsics {
                fx: k.fx * sx,
                fy: k.fy * sy,
                cx: (k.cx + 0.5) * sx - 0.5,
                cy: (k.cy + 0.5) * sy - 0.5,
                width,
                height,
            },
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.surface.validate()?;
        self.texture.validate()?;
        self.intrinsics.validate()?;
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::invalid(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if self.trajectory.len() < 3 {
            return Err(Error::invalid(format!(
                "trajectory needs at least 3 poses, got {}",
                self.trajectory.len()
            )));
        }
        for pose in &self.trajectory {
            pose.validate()?;
        }
        Ok(())
    }
}

/// One rendered frame with its exact depth.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    pub image: Image,
    pub depth: DepthMap,
}

/// Target frame `t` with sources `t − 1` and `t + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTriplet {
    pub target: Image,
    pub sources: Vec<Image>,
    pub target_depth: DepthMap,
    /// `T_{t→t−1}`, `T_{t→t+1}`.
    pub rel_poses: Vec<Pose>,
    pub intrinsics: Intrinsics,
}

impl FrameTriplet {
    pub fn frames(&self) -> Frames<'_> {
        Frames {
            target: &self.target,
            sources: &self.sources,
            intrinsics: &self.intrinsics,
        }
    }

    /// Ground-truth inverse depth and relative poses.
    pub fn truth(&self) -> Estimate {
        Estimate {
            inv_depth: self.target_depth.to_inverse(),
            poses: self.rel_poses.clone(),
        }
    }
}

/// Renders every trajectory pose: the texture is evaluated at the exact
/// ray-surface intersection of each pixel center.
pub fn render_frames(spec: &SceneSpec) -> Result<Vec<RenderedFrame>> {
    spec.validate()?;
    let k = &spec.intrinsics;
    spec.trajectory
        .iter()
        .enumerate()
        .map(|(index, pose)| {
            let rot = pose.rotation_matrix();
            let origin = pose.translation;
            let mut depth = Vec::with_capacity(k.width * k.height);
            let mut pixels = Vec::with_capacity(k.width * k.height * spec.channels);
            for v in 0..k.height {
                for u in 0..k.width {
                    let dir = rot * k.unproject(u as f64, v as f64);
                    let s = spec.surface.intersect(&origin, &dir).ok_or_else(|| Error::Generation {
                        pose_index: index,
                        reason: format!("pixel ({u}, {v}) misses the surface"),
                    })?;
                    let hit = origin + dir * s;
                    depth.push(s);
                    for c in 0..spec.channels {
                        pixels.push(spec.texture.sample(&hit, c));
                    }
                }
            }
            Ok(RenderedFrame {
                image: Image::new(k.width, k.height, spec.channels, pixels)?,
                depth: DepthMap::new(Field::new(k.width, k.height, depth)?)?,
            })
        })
        .collect()
}

/// Relative pose `T_{t→s}` from absolute world-from-camera poses.
pub fn relative_pose(target: &Pose, source: &Pose) -> Pose {
    source.inverse().compose(target)
}

/// Renders the scene and assembles a triplet for every interior frame.
pub fn render_scene(spec: &SceneSpec) -> Result<Vec<FrameTriplet>> {
    let frames = render_frames(spec)?;
    let traj = &spec.trajectory;
    Ok((1..frames.len() - 1)
        .map(|t| FrameTriplet {
            target: frames[t].image.clone(),
            sources: vec![frames[t - 1].image.clone(), frames[t + 1].image.clone()],
            target_depth: frames[t].depth.clone(),
            rel_poses: vec![
                relative_pose(&traj[t], &traj[t - 1]),
                relative_pose(&traj[t], &traj[t + 1]),
            ],
            intrinsics: spec.intrinsics,
        })
        .collect())
}
