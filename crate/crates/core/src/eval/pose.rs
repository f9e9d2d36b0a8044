use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::summarize;
use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Frame-indexed world-from-camera poses with strictly increasing indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    entries: Vec<(u64, Pose)>,
}

impl Trajectory {
    pub fn new(entries: Vec<(u64, Pose)>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::invalid(format!(
                    "trajectory indices must increase strictly: {} follows {}",
                    pair[1].0, pair[0].0
                )));
            }
        }
        for (_, pose) in &entries {
            pose.validate()?;
        }
        Ok(Trajectory { entries })
    }

    /// Indices `0, 1, 2, ...`.
    pub fn from_poses(poses: Vec<Pose>) -> Result<Self> {
        Trajectory::new(poses.into_iter().enumerate().map(|(i, p)| (i as u64, p)).collect())
    }

    pub fn entries(&self) -> &[(u64, Pose)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.entries.iter().map(|(_, p)| p.translation).collect()
    }

    /// Applies `S` to every pose: `P ↦ S · P`.
    pub fn transformed(&self, s: &Similarity) -> Trajectory {
        Trajectory {
            entries: self.entries.iter().map(|(i, p)| (*i, s.apply(p))).collect(),
        }
    }
}

/// `x ↦ scale · R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Similarity {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * x) + self.translation
    }

    /// Rotates the camera frame with the world and moves its center.
    pub fn apply(&self, pose: &Pose) -> Pose {
        Pose::from_rotation_translation(
            &(self.rotation * pose.rotation_matrix()),
            self.apply_point(&pose.translation),
        )
    }
}

/// Least-squares similarity (or rigid motion) mapping `pred` onto `reference`,
/// with the determinant-sign correction that keeps the rotation proper.
pub fn umeyama_align(pred: &[Vector3<f64>], reference: &[Vector3<f64>], with_scale: bool) -> Result<Similarity> {
    if pred.len() != reference.len() {
        return Err(Error::shape(format!("{} reference points", reference.len()), pred.len()));
    }
    if pred.len() < 3 {
        return Err(Error::Alignment(format!("need at least 3 poses, got {}", pred.len())));
    }
    let n = pred.len() as f64;
    let mu_x = pred.iter().sum::<Vector3<f64>>() / n;
    let mu_y = reference.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in pred.iter().zip(reference) {
        let (dx, dy) = (x - mu_x, y - mu_y);
        cov += dy * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov /= n;
    var_x /= n;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("U"), svd.v_t.expect("V^T"));
    let d = svd.singular_values;
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    if !(d[order[0]] > 0.0) || d[order[1]] <= 1e-12 * d[order[0]] {
        return Err(Error::Alignment("positions are collinear or coincident".into()));
    }
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(order[2], order[2])] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = if with_scale {
        (0..3).map(|i| d[i] * s[(i, i)]).sum::<f64>() / var_x
    } else {
        1.0
    };
    Ok(Similarity {
        scale,
        rotation,
        translation: mu_y - scale * rotation * mu_x,
    })
}

/// Alignment applied to each segment before computing errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    Similarity,
    Rigid,
    /// Compare poses as given.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApeMetrics {
    /// `‖rot(P⁻¹P̂) − I‖_F` statistics over all evaluated frames.
    pub rot_mean: f64,
    pub rot_max: f64,
    pub rot_median: f64,
    /// `‖trans(P⁻¹P̂)‖` statistics.
    pub trans_mean: f64,
    pub trans_max: f64,
    pub trans_median: f64,
    pub frames: usize,
    pub segments: usize,
}

/// Absolute pose error with per-segment similarity alignment.
pub fn ape(pred: &Trajectory, reference: &Trajectory, segment_len: usize) -> Result<ApeMetrics> {
    ape_with(pred, reference, segment_len, Alignment::Similarity)
}

/// Splits both trajectories into consecutive segments of `segment_len`
/// frames, aligns each predicted segment to its reference independently, and
/// aggregates per-frame errors. A trailing segment shorter than 3 frames is
/// dropped when alignment is requested.
pub fn ape_with(pred: &Trajectory, reference: &Trajectory, segment_len: usize, align: Alignment) -> Result<ApeMetrics> {
    if pred.len() != reference.len() {
        return Err(Error::shape(format!("{} reference poses", reference.len()), format!("{} predicted", pred.len())));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    if segment_len == 0 {
        return Err(Error::invalid("segment length must be positive"));
    }
    for ((a, _), (b, _)) in pred.entries().iter().zip(reference.entries()) {
        if a != b {
            return Err(Error::invalid(format!("frame index {a} does not match reference index {b}")));
        }
    }
    let min_len = if align == Alignment::None { 1 } else { 3 };
    let mut rot = Vec::new();
    let mut trans = Vec::new();
    let mut segments = 0;
    for (p, r) in pred.entries().chunks(segment_len).zip(reference.entries().chunks(segment_len)) {
        if p.len() < min_len {
            if segments == 0 {
                return Err(Error::Alignment(format!("need at least 3 poses, got {}", p.len())));
            }
            continue;
        }
        let s = match align {
            Alignment::None => Similarity::identity(),
            Alignment::Similarity | Alignment::Rigid => {
                let px: Vec<_> = p.iter().map(|(_, q)| q.translation).collect();
                let rx: Vec<_> = r.iter().map(|(_, q)| q.translation).collect();
                umeyama_align(&px, &rx, align == Alignment::Similarity)?
            }
        };
        for ((_, pp), (_, rp)) in p.iter().zip(r) {
            let aligned = s.apply(pp);
            let rr = rp.rotation_matrix();
            let e_rot = rr.transpose() * aligned.rotation_matrix();
            let e_trans = rr.transpose() * (aligned.translation - rp.translation);
            rot.push((e_rot - Matrix3::identity()).norm());
            trans.push(e_trans.norm());
        }
        segments += 1;
    }
    let (rot_mean, rot_max, rot_median) = summarize(&rot);
    let (trans_mean, trans_max, trans_median) = summarize(&trans);
    Ok(ApeMetrics {
        rot_mean,
        rot_max,
        rot_median,
        trans_mean,
        trans_max,
        trans_median,
        frames: rot.len(),
        segments,
    })
}
