use super::ssim::{ssim_backward, ssim_values};
use super::{LossWeights, SsimParams};
use crate::error::Result;
use crate::geometry::{Image, InverseDepthMap, Pose};

/// Joint min-max normalization of two maps onto `[0, 1]`.
struct JointRange {
    lo: f64,
    scale: f64,
    /// Pixel of the prediction attaining the minimum / maximum, if any.
    lo_at: Option<usize>,
    hi_at: Option<usize>,
}

impl JointRange {
    fn new(pred: &[f64], reference: &[f64]) -> Self {
        let fold = |xs: &[f64], better: fn(f64, f64) -> bool| {
            let mut best = (xs[0], 0);
            for (i, &x) in xs.iter().enumerate() {
                if better(x, best.0) {
                    best = (x, i);
                }
            }
            best
        };
        let (pmin, pmin_at) = fold(pred, |a, b| a < b);
        let (pmax, pmax_at) = fold(pred, |a, b| a > b);
        let (rmin, _) = fold(reference, |a, b| a < b);
        let (rmax, _) = fold(reference, |a, b| a > b);
        let (lo, lo_at) = if pmin <= rmin { (pmin, Some(pmin_at)) } else { (rmin, None) };
        let (hi, hi_at) = if pmax >= rmax { (pmax, Some(pmax_at)) } else { (rmax, None) };
        if hi > lo {
            JointRange {
                lo,
                scale: hi - lo,
                lo_at,
                hi_at,
            }
        } else {
            JointRange {
                lo,
                scale: 1.0,
                lo_at: None,
                hi_at: None,
            }
        }
    }

    fn apply(&self, xs: &[f64], w: usize, h: usize) -> Image {
        Image::from_raw(w, h, 1, xs.iter().map(|x| (x - self.lo) / self.scale).collect())
    }
}

fn forward_diffs(f: &[f64], w: usize, h: usize, i: usize) -> (f64, f64) {
    let (u, v) = (i % w, i / w);
    let dx = if u + 1 < w { f[i + 1] - f[i] } else { 0.0 };
    let dy = if v + 1 < h { f[i + w] - f[i] } else { 0.0 };
    (dx, dy)
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Inverse-depth supervision: mean over pixels of
/// `0.1 |e| + |∂x e| + |∂y e| + (1 − SSIM(d̂, d)) / 2` with `e = d̂ − d`,
/// SSIM taken on the jointly min-max normalized maps.
/// Optionally accumulates `scale · ∂/∂d̂` into `grad`.
pub(crate) fn depth_supervision_eval(
    pred: &[f64],
    reference: &[f64],
    w: usize,
    h: usize,
    p: &SsimParams,
    grad: Option<(&mut [f64], f64)>,
) -> f64 {
    let n = pred.len();
    let err: Vec<f64> = pred.iter().zip(reference).map(|(a, b)| a - b).collect();
    let range = JointRange::new(pred, reference);
    let a = range.apply(pred, w, h);
    let b = range.apply(reference, w, h);
    let ssim = ssim_values(&a, &b, p);
    let mut total = 0.0;
    for i in 0..n {
        let (dx, dy) = forward_diffs(&err, w, h, i);
        total += 0.1 * err[i].abs() + dx.abs() + dy.abs() + (1.0 - ssim[i]) / 2.0;
    }
    let value = total / n as f64;

    if let Some((grad, scale)) = grad {
        let g = scale / n as f64;
        let mut g_err = vec![0.0; n];
        for i in 0..n {
            g_err[i] += 0.1 * g * sign(err[i]);
            let (dx, dy) = forward_diffs(&err, w, h, i);
            if i % w + 1 < w {
                g_err[i + 1] += g * sign(dx);
                g_err[i] -= g * sign(dx);
            }
            if i / w + 1 < h {
                g_err[i + w] += g * sign(dy);
                g_err[i] -= g * sign(dy);
            }
        }
        let upstream = vec![-0.5 * g; n];
        let mut g_a = vec![0.0; n];
        let mut g_b = vec![0.0; n];
        ssim_backward(&a, &b, p, &upstream, Some(&mut g_a), Some(&mut g_b));
        let (an, bn) = (a.as_slice(), b.as_slice());
        let mut g_lo = 0.0;
        let mut g_hi = 0.0;
        for i in 0..n {
            g_lo += (g_a[i] * (an[i] - 1.0) + g_b[i] * (bn[i] - 1.0)) / range.scale;
            g_hi -= (g_a[i] * an[i] + g_b[i] * bn[i]) / range.scale;
        }
        for i in 0..n {
            grad[i] += g_err[i] + g_a[i] / range.scale;
        }
        if let Some(k) = range.lo_at {
            grad[k] += g_lo;
        }
        if let Some(k) = range.hi_at {
            grad[k] += g_hi;
        }
    }
    value
}

/// Direct inverse-depth supervision loss averaged over all pixels.
pub fn depth_supervision_loss(pred: &InverseDepthMap, reference: &InverseDepthMap, p: &SsimParams) -> Result<f64> {
    reference.field().check_shape(pred.width(), pred.height())?;
    p.validate()?;
    Ok(depth_supervision_eval(
        pred.field().as_slice(),
        reference.field().as_slice(),
        pred.width(),
        pred.height(),
        p,
        None,
    ))
}

/// `ζ ‖x̂ − x‖ + θ ‖r̂ − r‖` on translation and axis-angle components.
pub fn pose_supervision_loss(pred: &Pose, reference: &Pose, w: &LossWeights) -> Result<f64> {
    pred.validate()?;
    reference.validate()?;
    Ok(pose_supervision_eval(pred, reference, w, None))
}

/// Evaluates the pose distance and optionally accumulates `scale · ∂/∂(r, x)`.
pub(crate) fn pose_supervision_eval(pred: &Pose, reference: &Pose, w: &LossWeights, grad: Option<(&mut [f64; 6], f64)>) -> f64 {
    let dt = pred.translation - reference.translation;
    let dr = pred.rotation - reference.rotation;
    let (nt, nr) = (dt.norm(), dr.norm());
    if let Some((g, scale)) = grad {
        for k in 0..3 {
            if nr > 0.0 {
                g[k] += scale * w.theta * dr[k] / nr;
            }
            if nt > 0.0 {
                g[3 + k] += scale * w.zeta * dt[k] / nt;
            }
        }
    }
    w.zeta * nt + w.theta * nr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Field;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(w: usize, h: usize, rng: &mut ChaCha8Rng) -> InverseDepthMap {
        InverseDepthMap::new(Field::from_fn(w, h, |_, _| rng.random_range(0.2..1.5))).unwrap()
    }

    // Literal evaluation: explicit normalization, padded windows, nested loops.
    fn oracle(pred: &InverseDepthMap, reference: &InverseDepthMap, p: &SsimParams) -> f64 {
        let (w, h) = (pred.width(), pred.height());
        let all: Vec<f64> = pred.field().as_slice().iter().chain(reference.field().as_slice()).copied().collect();
        let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let na = |u: i64, v: i64| (pred.field().get(u as usize, v as usize) - lo) / (hi - lo);
        let nb = |u: i64, v: i64| (reference.field().get(u as usize, v as usize) - lo) / (hi - lo);
        let e = |u: usize, v: usize| pred.field().get(u, v) - reference.field().get(u, v);
        let r = (p.window / 2) as i64;
        let mut total = 0.0;
        for v in 0..h {
            for u in 0..w {
                let gx = if u + 1 < w { (e(u + 1, v) - e(u, v)).abs() } else { 0.0 };
                let gy = if v + 1 < h { (e(u, v + 1) - e(u, v)).abs() } else { 0.0 };
                let (mut xs, mut ys) = (vec![], vec![]);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let x = (u as i64 + dx).clamp(0, w as i64 - 1);
                        let y = (v as i64 + dy).clamp(0, h as i64 - 1);
                        xs.push(na(x, y));
                        ys.push(nb(x, y));
                    }
                }
                let k = xs.len() as f64;
                let (ma, mb) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
                let va = xs.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / k;
                let vb = ys.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / k;
                let cov = xs.iter().zip(&ys).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / k;
                let ssim = (2.0 * ma * mb + p.c1) * (2.0 * cov + p.c2) / ((ma * ma + mb * mb + p.c1) * (va + vb + p.c2));
                total += 0.1 * e(u, v).abs() + gx + gy + (1.0 - ssim) / 2.0;
            }
        }
        total / (w * h) as f64
    }

    #[test]
    fn identical_maps_have_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_map(7, 6, &mut rng);
        assert_eq!(depth_supervision_loss(&d, &d, &SsimParams::default()).unwrap(), 0.0);
        let flat = InverseDepthMap::new(Field::filled(5, 5, 0.5)).unwrap();
        assert_eq!(depth_supervision_loss(&flat, &flat, &SsimParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_matches_closed_form() {
        let p = SsimParams::default();
        let c = 0.2;
        let reference = InverseDepthMap::new(Field::filled(6, 6, 0.5)).unwrap();
        let pred = InverseDepthMap::new(Field::filled(6, 6, 0.5 + c)).unwrap();
        // normalized: pred -> 1, reference -> 0
        let ssim = p.c1 * p.c2 / ((1.0 + p.c1) * p.c2);
        let expected = 0.1 * c + (1.0 - ssim) / 2.0;
        let got = depth_supervision_loss(&pred, &reference, &p).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = SsimParams::default();
        for _ in 0..5 {
            let a = random_map(8, 7, &mut rng);
            let b = random_map(8, 7, &mut rng);
            let got = depth_supervision_loss(&a, &b, &p).unwrap();
            assert!((got - oracle(&a, &b, &p)).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = InverseDepthMap::new(Field::filled(4, 4, 1.0)).unwrap();
        let b = InverseDepthMap::new(Field::filled(4, 5, 1.0)).unwrap();
        assert!(depth_supervision_loss(&a, &b, &SsimParams::default()).is_err());
    }

    #[test]
    fn depth_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, h) = (6, 5);
        let p = SsimParams::default();
        let pred: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.2..1.5)).collect();
        // reference strictly inside the prediction's range so min/max stay put
        let reference: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.4..1.2)).collect();
        let mut grad = vec![0.0; w * h];
        depth_supervision_eval(&pred, &reference, w, h, &p, Some((&mut grad, 2.0)));
        let step = 1e-7;
        for i in 0..w * h {
            let (mut a, mut b) = (pred.clone(), pred.clone());
            a[i] += step;
            b[i] -= step;
            let fd = 2.0 * (depth_supervision_eval(&a, &reference, w, h, &p, None)
                - depth_supervision_eval(&b, &reference, w, h, &p, None))
                / (2.0 * step);
            assert!((fd - grad[i]).abs() < 1e-5, "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn pose_loss_arithmetic() {
        let w = LossWeights::default();
        let a = Pose::new(Vector3::new(0.1, 0.0, 0.2), Vector3::new(0.3, 1.0, 4.0)).unwrap();
        assert_eq!(pose_supervision_loss(&a, &a, &w).unwrap(), 0.0);
        let b = Pose::new(a.rotation * 2.0, a.translation).unwrap();
        assert!((pose_supervision_loss(&a, &b, &w).unwrap() - 160.0 * a.rotation.norm()).abs() < 1e-12);
        let c = Pose::new(a.rotation, a.translation + Vector3::new(0.3, 0.0, 0.4)).unwrap();
        assert!((pose_supervision_loss(&c, &a, &w).unwrap() - 15.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn pose_loss_is_symmetric_and_matches_hand_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = LossWeights::default();
        for _ in 0..20 {
            let mut v = || Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let a = Pose::new(v(), v()).unwrap();
            let b = Pose::new(v(), v()).unwrap();
            let hand = 15.0 * ((a.translation - b.translation).map(|x| x * x).sum()).sqrt()
                + 160.0 * ((a.rotation - b.rotation).map(|x| x * x).sum()).sqrt();
            let ab = pose_supervision_loss(&a, &b, &w).unwrap();
            assert!((ab - hand).abs() < 1e-12);
            assert!((ab - pose_supervision_loss(&b, &a, &w).unwrap()).abs() < 1e-12);
        }
    }
}
