use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{InverseDepthMap, Pose};
use crate::losses::{Estimate, Objective};

/// Analytic gradient against central differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// Interior inverse-depth entries compared.
    pub depth_checked: usize,
    /// Entries whose relative error is within tolerance.
    pub depth_agreeing: usize,
    /// Relative error of each pose parameter, source-major.
    pub pose_rel_errors: Vec<f64>,
    /// Pixels excluded from each pose comparison because a min-switch, mask
    /// flip, or sampling-cell crossing falls inside the difference stencil.
    pub pose_skipped_pixels: Vec<usize>,
}

impl GradientCheck {
    pub fn depth_fraction(&self) -> f64 {
        self.depth_agreeing as f64 / self.depth_checked as f64
    }

    pub fn max_pose_error(&self) -> f64 {
        self.pose_rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

fn rel_error(a: f64, b: f64, floor: f64) -> f64 {
    let den = a.abs().max(b.abs()).max(floor);
    if den == 0.0 {
        0.0
    } else {
        (a - b).abs() / den
    }
}

/// Compares analytic gradients with central differences of step `step`.
///
/// Every inverse-depth entry at least `border` pixels from the image edge is
/// perturbed on its own. Each pose parameter is compared on the sum over
/// pixels whose discrete state (argmin source, automask, sampling cells) is
/// unchanged across the stencil in their whole SSIM window; the analytic side
/// drops the same pixels.
pub fn check_gradients(objective: &Objective<'_>, at: &Estimate, step: f64, tol: f64, border: usize) -> Result<GradientCheck> {
    let k = objective.frames().intrinsics;
    let (w, h) = (k.width, k.height);
    let (_, grad) = objective.value_and_gradient(at, true, true)?;
    let scale = grad.inv_depth.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut depth_checked = 0;
    let mut depth_agreeing = 0;
    let mut field = at.inv_depth.field().clone();
    for v in border..h.saturating_sub(border) {
        for u in border..w.saturating_sub(border) {
            let i = v * w + u;
            let x = field.as_slice()[i];
            let mut eval = |value: f64| -> Result<f64> {
                field.as_mut_slice()[i] = value;
                objective.value(&Estimate {
                    inv_depth: InverseDepthMap::new(field.clone())?,
                    poses: at.poses.clone(),
                })
            };
            let fd = (eval(x + step)? - eval(x - step)?) / (2.0 * step);
            field.as_mut_slice()[i] = x;
            depth_checked += 1;
            if rel_error(grad.inv_depth[i], fd, 1e-6 * scale) <= tol {
                depth_agreeing += 1;
            }
        }
    }

    let radius = objective.ssim().window as isize / 2;
    let base = objective.pixel_states(at)?;
    let mut pose_rel_errors = Vec::new();
    let mut pose_skipped_pixels = Vec::new();
    for j in 0..at.poses.len() {
        for c in 0..6 {
            let shifted = |delta: f64| {
                let mut poses = at.poses.clone();
                let mut q = poses[j].to_params();
                q[c] += delta;
                poses[j] = Pose::from_params(&q);
                Estimate {
                    inv_depth: at.inv_depth.clone(),
                    poses,
                }
            };
            let (plus, minus) = (shifted(step), shifted(-step));
            let (sp, sm) = (objective.pixel_states(&plus)?, objective.pixel_states(&minus)?);
            let stable: Vec<bool> = (0..w * h).map(|i| base[i] == sp[i] && base[i] == sm[i]).collect();
            let keep: Vec<bool> = (0..w * h)
                .map(|i| {
                    let (u, v) = ((i % w) as isize, (i / w) as isize);
                    (-radius..=radius).all(|dv| {
                        (-radius..=radius).all(|du| {
                            let (x, y) = ((u + du).clamp(0, w as isize - 1), (v + dv).clamp(0, h as isize - 1));
                            stable[y as usize * w + x as usize]
                        })
                    })
                })
                .collect();
            let (_, g) = objective.value_and_gradient_on(at, false, true, &keep)?;
            let fp = objective.value_and_gradient_on(&plus, false, false, &keep)?.0;
            let fm = objective.value_and_gradient_on(&minus, false, false, &keep)?.0;
            let fd = (fp - fm) / (2.0 * step);
            pose_rel_errors.push(rel_error(g.poses[j][c], fd, 1e-12));
            pose_skipped_pixels.push(keep.iter().filter(|&&k| !k).count());
        }
    }
    Ok(GradientCheck {
        depth_checked,
        depth_agreeing,
        pose_rel_errors,
        pose_skipped_pixels,
    })
}
