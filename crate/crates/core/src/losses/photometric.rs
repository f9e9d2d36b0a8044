use super::ssim::{ssim_backward, ssim_values};
use super::{LossWeights, PixelLossMap, SsimParams};
use crate::error::{Error, Result};
use crate::geometry::{
    sample_with_grad, DepthMap, Field, Image, Intrinsics, Mask, Pose, PoseProjector, ProjectedPixel,
};

/// Per-pixel `α/2 (1 − SSIM) + (1 − α) · mean_c |a − b|`.
pub(crate) fn pe_values(a: &Image, b: &Image, alpha: f64, p: &SsimParams) -> Vec<f64> {
    let ssim = ssim_values(a, b, p);
    let ch = a.channels();
    let (ad, bd) = (a.as_slice(), b.as_slice());
    ssim.iter()
        .enumerate()
        .map(|(i, s)| {
            let l1: f64 = (0..ch).map(|c| (ad[i * ch + c] - bd[i * ch + c]).abs()).sum::<f64>() / ch as f64;
            alpha / 2.0 * (1.0 - s) + (1.0 - alpha) * l1
        })
        .collect()
}

/// Photometric error map between two images.
pub fn pe(a: &Image, b: &Image, w: &LossWeights, p: &SsimParams) -> Result<PixelLossMap> {
    a.check_same_shape(b)?;
    w.validate()?;
    p.validate()?;
    Ok(PixelLossMap {
        values: Field::new(a.width(), a.height(), pe_values(a, b, w.alpha, p))?,
        weight_mask: Mask::filled(a.width(), a.height(), true),
    })
}

/// Per-pixel minimum of `pe(target, source_j)` over the unwarped sources.
pub(crate) fn identity_min(target: &Image, sources: &[Image], alpha: f64, p: &SsimParams) -> Vec<f64> {
    let mut best = vec![f64::INFINITY; target.width() * target.height()];
    for s in sources {
        for (b, e) in best.iter_mut().zip(pe_values(target, s, alpha, p)) {
            *b = b.min(e);
        }
    }
    best
}

/// One source warped into the target view, kept for the backward pass.
pub(crate) struct WarpedSource {
    pub image: Image,
    pub pixels: Vec<ProjectedPixel>,
}

/// Min-over-sources photometric error for one depth hypothesis and one set
/// of target-to-source poses.
pub(crate) struct PhotometricTerm {
    pub warped: Vec<WarpedSource>,
    /// Minimum over valid warps; zero where no warp is valid.
    pub min: Vec<f64>,
    /// Index of the source attaining the minimum, `None` if no warp is valid.
    pub argmin: Vec<Option<usize>>,
}

impl PhotometricTerm {
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        target: &Image,
        sources: &[Image],
        depth: &Field,
        poses: &[Pose],
        k: &Intrinsics,
        alpha: f64,
        p: &SsimParams,
        jacobians: bool,
    ) -> Self {
        let (w, h, ch) = (k.width, k.height, target.channels());
        let n = w * h;
        let mut min = vec![f64::INFINITY; n];
        let mut argmin = vec![None; n];
        let mut warped = Vec::with_capacity(sources.len());
        for (j, (src, pose)) in sources.iter().zip(poses).enumerate() {
            let projector = PoseProjector::new(k, pose);
            let mut pixels = Vec::with_capacity(n);
            let mut data = Vec::with_capacity(n * ch);
            for v in 0..h {
                for u in 0..w {
                    let px = projector.project(u, v, depth.get(u, v), jacobians);
                    for c in 0..ch {
                        data.push(sample_with_grad(src, px.u, px.v, c).0);
                    }
                    pixels.push(px);
                }
            }
            let image = Image::from_raw(w, h, ch, data);
            let pe = pe_values(target, &image, alpha, p);
            for i in 0..n {
                if pixels[i].valid && pe[i] < min[i] {
                    min[i] = pe[i];
                    argmin[i] = Some(j);
                }
            }
            warped.push(WarpedSource { image, pixels });
        }
        for m in min.iter_mut() {
            if m.is_infinite() {
                *m = 0.0;
            }
        }
        PhotometricTerm { warped, min, argmin }
    }

    pub fn any_valid(&self) -> Vec<bool> {
        self.argmin.iter().map(Option::is_some).collect()
    }

    /// Strict-inequality automask against the unwarped minimum.
    pub fn automask(&self, identity_min: &[f64]) -> Vec<bool> {
        self.argmin
            .iter()
            .zip(&self.min)
            .zip(identity_min)
            .map(|((a, m), id)| a.is_some() && m < id)
            .collect()
    }

    /// Back-propagates `Σ_i upstream[i] · min[i]` to the per-pixel depth and
    /// the per-source pose parameters. Accumulates into the given buffers.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        target: &Image,
        sources: &[Image],
        alpha: f64,
        p: &SsimParams,
        upstream: &[f64],
        mut grad_depth: Option<&mut [f64]>,
        mut grad_poses: Option<&mut [[f64; 6]]>,
    ) {
        let ch = target.channels();
        let n = upstream.len();
        let t = target.as_slice();
        for (j, ws) in self.warped.iter().enumerate() {
            let per_pixel: Vec<f64> = (0..n)
                .map(|i| if self.argmin[i] == Some(j) { upstream[i] } else { 0.0 })
                .collect();
            if per_pixel.iter().all(|&g| g == 0.0) {
                continue;
            }
            let wimg = ws.image.as_slice();
            let mut g_img = vec![0.0; n * ch];
            for i in 0..n {
                let g = per_pixel[i];
                if g == 0.0 {
                    continue;
                }
                for c in 0..ch {
                    let diff = wimg[i * ch + c] - t[i * ch + c];
                    let sign = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    g_img[i * ch + c] += g * (1.0 - alpha) / ch as f64 * sign;
                }
            }
            let g_ssim: Vec<f64> = per_pixel.iter().map(|g| -g * alpha / 2.0).collect();
            ssim_backward(target, &ws.image, p, &g_ssim, None, Some(&mut g_img));

            for (i, px) in ws.pixels.iter().enumerate() {
                if !px.front {
                    continue;
                }
                let (mut gu, mut gv) = (0.0, 0.0);
                for c in 0..ch {
                    let g = g_img[i * ch + c];
                    if g != 0.0 {
                        let (_, du, dv) = sample_with_grad(&sources[j], px.u, px.v, c);
                        gu += g * du;
                        gv += g * dv;
                    }
                }
                if gu == 0.0 && gv == 0.0 {
                    continue;
                }
                if let Some(gd) = grad_depth.as_deref_mut() {
                    gd[i] += gu * px.d_depth[0] + gv * px.d_depth[1];
                }
                if let Some(gp) = grad_poses.as_deref_mut() {
                    for q in 0..6 {
                        gp[j][q] += gu * px.d_pose[0][q] + gv * px.d_pose[1][q];
                    }
                }
            }
        }
    }
}

pub(crate) fn check_sources(target: &Image, sources: &[Image], n_poses: usize, k: &Intrinsics) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::invalid("at least one source image is required"));
    }
    if n_poses != sources.len() {
        return Err(Error::invalid(format!(
            "{} sources but {} poses",
            sources.len(),
            n_poses
        )));
    }
    target.check_size(k.width, k.height)?;
    for s in sources {
        target.check_same_shape(s)?;
    }
    Ok(())
}

/// Per-pixel minimum over sources of `pe(target, warp(source_j))`. Pixels
/// whose projection is invalid in every source are excluded from the mask.
pub fn reprojection_loss(
    target: &Image,
    sources: &[Image],
    depth: &DepthMap,
    poses: &[Pose],
    k: &Intrinsics,
    w: &LossWeights,
    p: &SsimParams,
) -> Result<PixelLossMap> {
    k.validate()?;
    check_sources(target, sources, poses.len(), k)?;
    depth.field().check_shape(k.width, k.height)?;
    w.validate()?;
    p.validate()?;
    for pose in poses {
        pose.validate()?;
    }
    let term = PhotometricTerm::evaluate(target, sources, depth.field(), poses, k, w.alpha, p, false);
    Ok(PixelLossMap {
        weight_mask: Mask::new(k.width, k.height, term.any_valid())?,
        values: Field::new(k.width, k.height, term.min)?,
    })
}

/// `min_j pe(target, warped_j) < min_j pe(target, source_j)` per pixel.
pub fn automask(
    target: &Image,
    sources: &[Image],
    warped: &[Image],
    w: &LossWeights,
    p: &SsimParams,
) -> Result<Mask> {
    if sources.is_empty() || warped.is_empty() {
        return Err(Error::invalid("automask needs at least one source and one warped image"));
    }
    for img in sources.iter().chain(warped) {
        target.check_same_shape(img)?;
    }
    let id = identity_min(target, sources, w.alpha, p);
    let warped_min = identity_min(target, warped, w.alpha, p);
    Mask::new(
        target.width(),
        target.height(),
        warped_min.iter().zip(&id).map(|(a, b)| a < b).collect(),
    )
}
