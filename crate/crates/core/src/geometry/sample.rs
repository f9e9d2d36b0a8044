use super::camera::{project, FlowField, Intrinsics};
use super::image::{DepthMap, Image, Mask};
use super::se3::Pose;
use crate::error::{Error, Result};

/// Lower cell corner and fractional offset along one axis. The coordinate is
/// clamped to `[0, n-1]`; `clamped` reports whether clamping was active.
#[inline]
fn cell(x: f64, n: usize) -> (usize, f64, bool) {
    if n == 1 {
        return (0, 0.0, true);
    }
    let max = (n - 1) as f64;
    let (xc, clamped) = if x < 0.0 {
        (0.0, true)
    } else if x > max {
        (max, true)
    } else if x.is_nan() {
        (0.0, true)
    } else {
        (x, false)
    };
    let i0 = (xc.floor() as usize).min(n - 2);
    (i0, xc - i0 as f64, clamped)
}

/// Bilinear interpolation of channel `c` at continuous `(u, v)` with
/// clamp-to-edge; also returns `∂/∂u` and `∂/∂v` (zero along clamped axes).
#[inline]
pub(crate) fn sample_with_grad(img: &Image, u: f64, v: f64, c: usize) -> (f64, f64, f64) {
    let (w, h) = (img.width(), img.height());
    let (u0, fu, cu) = cell(u, w);
    let (v0, fv, cv) = cell(v, h);
    let u1 = (u0 + 1).min(w - 1);
    let v1 = (v0 + 1).min(h - 1);
    let i00 = img.get(u0, v0, c);
    let i10 = img.get(u1, v0, c);
    let i01 = img.get(u0, v1, c);
    let i11 = img.get(u1, v1, c);
    let top = (1.0 - fu) * i00 + fu * i10;
    let bottom = (1.0 - fu) * i01 + fu * i11;
    let value = (1.0 - fv) * top + fv * bottom;
    let du = if cu { 0.0 } else { (1.0 - fv) * (i10 - i00) + fv * (i11 - i01) };
    let dv = if cv { 0.0 } else { bottom - top };
    (value, du, dv)
}

/// Samples `src` at every flow coordinate. Coordinates are clamped to the
/// image before interpolation; the returned mask is `flow.valid`.
pub fn bilinear_sample(src: &Image, flow: &FlowField) -> Result<(Image, Mask)> {
    if src.width() != flow.width || src.height() != flow.height {
        return Err(Error::shape(
            format!("{}x{}", flow.width, flow.height),
            format!("{}x{}", src.width(), src.height()),
        ));
    }
    let ch = src.channels();
    let mut data = Vec::with_capacity(flow.coords.len() * ch);
    for &(u, v) in &flow.coords {
        for c in 0..ch {
            data.push(sample_with_grad(src, u, v, c).0);
        }
    }
    Ok((
        Image::from_raw(src.width(), src.height(), ch, data),
        flow.valid.clone(),
    ))
}

/// Synthesizes the target view from `src` using target depth and the
/// target-to-source pose.
pub fn warp(src: &Image, depth: &DepthMap, pose: &Pose, k: &Intrinsics) -> Result<(Image, Mask)> {
    src.check_size(k.width, k.height)?;
    let flow = project(depth, pose, k)?;
    bilinear_sample(src, &flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Field;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, c, |_, _, _| rng.random::<f64>()).unwrap()
    }

    // Literal double loop over the four neighbours.
    fn naive_bilinear(img: &Image, u: f64, v: f64, c: usize) -> f64 {
        let u = u.clamp(0.0, (img.width() - 1) as f64);
        let v = v.clamp(0.0, (img.height() - 1) as f64);
        let mut acc = 0.0;
        for j in 0..img.height() {
            for i in 0..img.width() {
                let wu = (1.0 - (u - i as f64).abs()).max(0.0);
                let wv = (1.0 - (v - j as f64).abs()).max(0.0);
                acc += wu * wv * img.get(i, j, c);
            }
        }
        acc
    }

    #[test]
    fn identity_flow_is_exact() {
        let img = random_image(9, 7, 3, 1);
        let (out, mask) = bilinear_sample(&img, &FlowField::identity(9, 7)).unwrap();
        assert_eq!(out, img);
        assert!(mask.all());
    }

    #[test]
    fn center_of_cell_averages_neighbours() {
        let img = random_image(4, 4, 1, 2);
        let mut flow = FlowField::identity(4, 4);
        flow.coords[0] = (1.5, 2.5);
        let (out, _) = bilinear_sample(&img, &flow).unwrap();
        let avg = (img.get(1, 2, 0) + img.get(2, 2, 0) + img.get(1, 3, 0) + img.get(2, 3, 0)) / 4.0;
        assert!((out.get(0, 0, 0) - avg).abs() < 1e-15);
    }

    #[test]
    fn matches_double_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let img = random_image(8, 8, if trial % 2 == 0 { 1 } else { 3 }, 10 + trial);
            let mut flow = FlowField::identity(8, 8);
            for c in flow.coords.iter_mut() {
                *c = (rng.random_range(-1.0..9.0), rng.random_range(-1.0..9.0));
            }
            let (out, _) = bilinear_sample(&img, &flow).unwrap();
            for v in 0..8 {
                for u in 0..8 {
                    let (su, sv) = flow.get(u, v);
                    for c in 0..img.channels() {
                        assert!((out.get(u, v, c) - naive_bilinear(&img, su, sv, c)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn sample_derivatives_match_finite_differences() {
        let img = random_image(6, 5, 1, 4);
        let (u, v) = (2.3, 1.7);
        let (_, du, dv) = sample_with_grad(&img, u, v, 0);
        let h = 1e-7;
        let fu = (sample_with_grad(&img, u + h, v, 0).0 - sample_with_grad(&img, u - h, v, 0).0) / (2.0 * h);
        let fv = (sample_with_grad(&img, u, v + h, 0).0 - sample_with_grad(&img, u, v - h, 0).0) / (2.0 * h);
        assert!((du - fu).abs() < 1e-7 && (dv - fv).abs() < 1e-7);
        let (_, du, _) = sample_with_grad(&img, -3.0, v, 0);
        assert_eq!(du, 0.0);
    }

    #[test]
    fn identity_warp_returns_source() {
        let k = Intrinsics::new(30.0, 30.0, 7.5, 5.5, 16, 12).unwrap();
        let img = random_image(16, 12, 3, 5);
        let depth = DepthMap::new(Field::from_fn(16, 12, |u, v| 1.0 + 0.1 * (u * v) as f64)).unwrap();
        let (out, mask) = warp(&img, &depth, &Pose::identity(), &k).unwrap();
        assert_eq!(out, img);
        assert!(mask.all());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let img = random_image(5, 5, 1, 6);
        assert!(bilinear_sample(&img, &FlowField::identity(4, 5)).is_err());
    }
}
