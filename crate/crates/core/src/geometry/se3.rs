use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this angle Rodrigues' formula is replaced by its second-order expansion.
pub const SMALL_ANGLE: f64 = 1e-8;

#[inline]
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation matrix of an axis-angle vector (Rodrigues).
pub fn axis_angle_to_matrix(r: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if !r.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid(format!("non-finite axis-angle {r:?}")));
    }
    Ok(rodrigues(r))
}

pub(crate) fn rodrigues(r: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = r.norm_squared();
    let k = skew(r);
    let (a, b) = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        (1.0, 0.5)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Left Jacobian of SO(3): `R(r + δ) ≈ exp(J_l(r) δ) R(r)` for small δ.
pub(crate) fn left_jacobian(r: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = r.norm_squared();
    let k = skew(r);
    let (a, b) = if theta2 < 1e-10 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Axis-angle vector of a rotation matrix, with angle in `[0, π]`.
pub fn matrix_to_axis_angle(m: &Matrix3<f64>) -> Vector3<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
    q.scaled_axis()
}

/// Rigid transform stored as axis-angle rotation plus translation.
///
/// A relative pose `T_{t→t'}` maps points from target-camera coordinates into
/// source-camera coordinates: `X_src = R X_tgt + x`. Absolute poses in a
/// trajectory are world-from-camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Pose {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Vector3::zeros(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose {
            rotation: Vector3::zeros(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|x| x.is_finite()) {
            return Err(Error::invalid("pose has non-finite components"));
        }
        if self.rotation.norm() > std::f64::consts::PI + 1e-12 {
            return Err(Error::invalid(format!(
                "axis-angle norm {} exceeds π",
                self.rotation.norm()
            )));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rodrigues(&self.rotation)
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_rotation_translation(r: &Matrix3<f64>, t: Vector3<f64>) -> Self {
        Pose {
            rotation: matrix_to_axis_angle(r),
            translation: t,
        }
    }

    /// Reads the rigid part of a homogeneous matrix.
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        Pose::from_rotation_translation(&r, m.fixed_view::<3, 1>(0, 3).into_owned())
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let ra = self.rotation_matrix();
        let r = ra * other.rotation_matrix();
        Pose::from_rotation_translation(&r, ra * other.translation + self.translation)
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation_matrix().transpose();
        Pose {
            rotation: -self.rotation,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p + self.translation
    }

    /// Packs as `[rx, ry, rz, tx, ty, tz]`.
    pub fn to_params(&self) -> [f64; 6] {
        let (r, t) = (&self.rotation, &self.translation);
        [r.x, r.y, r.z, t.x, t.y, t.z]
    }

    pub fn from_params(p: &[f64; 6]) -> Self {
        Pose {
            rotation: Vector3::new(p[0], p[1], p[2]),
            translation: Vector3::new(p[3], p[4], p[5]),
        }
    }

    pub fn rotation_angle(&self) -> f64 {
        self.rotation.norm()
    }
}
