use super::{PixelLossMap, SsimParams};
use crate::error::Result;
use crate::geometry::{Field, Image, Mask};

/// Window moments of one channel around one pixel.
#[derive(Clone, Copy, Debug)]
struct Moments {
    mu_a: f64,
    mu_b: f64,
    saa: f64,
    sbb: f64,
    sab: f64,
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Clamp-to-edge window offsets around `(u, v)`, visiting each window slot once.
#[inline]
fn window(u: usize, v: usize, w: usize, h: usize, radius: isize) -> impl Iterator<Item = (usize, usize)> {
    (-radius..=radius).flat_map(move |dv| {
        (-radius..=radius).map(move |du| {
            (
                clamp_index(u as isize + du, w),
                clamp_index(v as isize + dv, h),
            )
        })
    })
}

fn moments(a: &Image, b: &Image, u: usize, v: usize, c: usize, radius: isize) -> Moments {
    let (w, h) = (a.width(), a.height());
    let mut m = Moments {
        mu_a: 0.0,
        mu_b: 0.0,
        saa: 0.0,
        sbb: 0.0,
        sab: 0.0,
    };
    for (x, y) in window(u, v, w, h, radius) {
        let (p, q) = (a.get(x, y, c), b.get(x, y, c));
        m.mu_a += p;
        m.mu_b += q;
        m.saa += p * p;
        m.sbb += q * q;
        m.sab += p * q;
    }
    let n = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    m.mu_a /= n;
    m.mu_b /= n;
    m.saa /= n;
    m.sbb /= n;
    m.sab /= n;
    m
}

/// SSIM of one channel at one pixel, plus its partials with respect to the
/// five window moments, in `Moments` field order.
#[inline]
fn ssim_from_moments(m: &Moments, c1: f64, c2: f64) -> (f64, [f64; 5]) {
    let var_a = m.saa - m.mu_a * m.mu_a;
    let var_b = m.sbb - m.mu_b * m.mu_b;
    let cov = m.sab - m.mu_a * m.mu_b;
    let a1 = 2.0 * m.mu_a * m.mu_b + c1;
    let a2 = 2.0 * cov + c2;
    let b1 = m.mu_a * m.mu_a + m.mu_b * m.mu_b + c1;
    let b2 = var_a + var_b + c2;
    let den = b1 * b2;
    let s = a1 * a2 / den;
    let g_mu_a = 2.0 * m.mu_b * (a2 - a1) / den - s * 2.0 * m.mu_a * (1.0 / b1 - 1.0 / b2);
    let g_mu_b = 2.0 * m.mu_a * (a2 - a1) / den - s * 2.0 * m.mu_b * (1.0 / b1 - 1.0 / b2);
    let g_sq = -s / b2;
    let g_sab = 2.0 * a1 / den;
    (s, [g_mu_a, g_mu_b, g_sq, g_sq, g_sab])
}

/// Per-pixel SSIM averaged over channels, in `[-1, 1]`.
pub(crate) fn ssim_values(a: &Image, b: &Image, p: &SsimParams) -> Vec<f64> {
    let radius = (p.window / 2) as isize;
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    let mut out = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let mut acc = 0.0;
            for c in 0..ch {
                acc += ssim_from_moments(&moments(a, b, u, v, c, radius), p.c1, p.c2).0;
            }
            out.push(acc / ch as f64);
        }
    }
    out
}

/// Accumulates `Σ_p upstream[p] · ∂SSIM(p)/∂a` and `∂/∂b` into
/// channel-interleaved gradient buffers. Pixels with zero upstream are skipped.
pub(crate) fn ssim_backward(
    a: &Image,
    b: &Image,
    p: &SsimParams,
    upstream: &[f64],
    grad_a: Option<&mut [f64]>,
    grad_b: Option<&mut [f64]>,
) {
    let radius = (p.window / 2) as isize;
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    let n = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let mut grad_a = grad_a;
    let mut grad_b = grad_b;
    for v in 0..h {
        for u in 0..w {
            let g = upstream[v * w + u];
            if g == 0.0 {
                continue;
            }
            for c in 0..ch {
                let m = moments(a, b, u, v, c, radius);
                let (_, d) = ssim_from_moments(&m, p.c1, p.c2);
                let scale = g / (ch as f64 * n);
                for (x, y) in window(u, v, w, h, radius) {
                    let idx = (y * w + x) * ch + c;
                    let (pa, pb) = (a.get(x, y, c), b.get(x, y, c));
                    if let Some(ga) = grad_a.as_deref_mut() {
                        ga[idx] += scale * (d[0] + 2.0 * d[2] * pa + d[4] * pb);
                    }
                    if let Some(gb) = grad_b.as_deref_mut() {
                        gb[idx] += scale * (d[1] + 2.0 * d[3] * pb + d[4] * pa);
                    }
                }
            }
        }
    }
}

/// Windowed SSIM map with clamp-to-edge padding, averaged across channels.
pub fn ssim_map(a: &Image, b: &Image, p: &SsimParams) -> Result<PixelLossMap> {
    a.check_same_shape(b)?;
    p.validate()?;
    let values = Field::new(a.width(), a.height(), ssim_values(a, b, p))?;
    Ok(PixelLossMap {
        values,
        weight_mask: Mask::filled(a.width(), a.height(), true),
    })
}
