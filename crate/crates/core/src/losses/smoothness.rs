use super::PixelLossMap;
use crate::error::Result;
use crate::geometry::{Field, Image, InverseDepthMap, Mask};

/// Edge weights `exp(-|∂I|)` along x and y, with `|∂I|` the channel mean of
/// absolute forward differences.
pub(crate) fn edge_weights(img: &Image) -> (Vec<f64>, Vec<f64>) {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut ex = vec![0.0; w * h];
    let mut ey = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            if u + 1 < w {
                let g: f64 = (0..ch).map(|c| (img.get(u + 1, v, c) - img.get(u, v, c)).abs()).sum();
                ex[i] = (-g / ch as f64).exp();
            }
            if v + 1 < h {
                let g: f64 = (0..ch).map(|c| (img.get(u, v + 1, c) - img.get(u, v, c)).abs()).sum();
                ey[i] = (-g / ch as f64).exp();
            }
        }
    }
    (ex, ey)
}

fn forward_diffs(f: &[f64], w: usize, h: usize, u: usize, v: usize) -> (f64, f64) {
    let i = v * w + u;
    let dx = if u + 1 < w { f[i + 1] - f[i] } else { 0.0 };
    let dy = if v + 1 < h { f[i + w] - f[i] } else { 0.0 };
    (dx, dy)
}

pub(crate) fn smoothness_values(inv_depth: &[f64], w: usize, h: usize, edges: &(Vec<f64>, Vec<f64>)) -> Vec<f64> {
    let mean = inv_depth.iter().sum::<f64>() / inv_depth.len() as f64;
    let norm: Vec<f64> = inv_depth.iter().map(|d| d / mean).collect();
    let mut out = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let (dx, dy) = forward_diffs(&norm, w, h, u, v);
            let i = v * w + u;
            out.push(dx.abs() * edges.0[i] + dy.abs() * edges.1[i]);
        }
    }
    out
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

/// Accumulates `∂(Σ_i upstream[i] · L_s[i]) / ∂d` into `grad`, including the
/// coupling through the mean normalization.
pub(crate) fn smoothness_backward(
    inv_depth: &[f64],
    w: usize,
    h: usize,
    edges: &(Vec<f64>, Vec<f64>),
    upstream: &[f64],
    grad: &mut [f64],
) {
    let n = inv_depth.len() as f64;
    let mean = inv_depth.iter().sum::<f64>() / n;
    let norm: Vec<f64> = inv_depth.iter().map(|d| d / mean).collect();
    let mut g_norm = vec![0.0; inv_depth.len()];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let (dx, dy) = forward_diffs(&norm, w, h, u, v);
            let g = upstream[i];
            if u + 1 < w {
                let s = g * edges.0[i] * sign(dx);
                g_norm[i + 1] += s;
                g_norm[i] -= s;
            }
            if v + 1 < h {
                let s = g * edges.1[i] * sign(dy);
                g_norm[i + w] += s;
                g_norm[i] -= s;
            }
        }
    }
    // d*_j = d_j / m, m = mean(d)
    let coupling: f64 = g_norm.iter().zip(inv_depth).map(|(g, d)| g * d).sum::<f64>() / (mean * mean * n);
    for (out, g) in grad.iter_mut().zip(&g_norm) {
        *out += g / mean - coupling;
    }
}

/// Edge-aware smoothness of the mean-normalized inverse depth.
pub fn smoothness_loss(inv_depth: &InverseDepthMap, target: &Image) -> Result<PixelLossMap> {
    let (w, h) = (inv_depth.width(), inv_depth.height());
    target.check_size(w, h)?;
    let edges = edge_weights(target);
    Ok(PixelLossMap {
        values: Field::new(w, h, smoothness_values(inv_depth.field().as_slice(), w, h, &edges))?,
        weight_mask: Mask::filled(w, h, true),
    })
}
