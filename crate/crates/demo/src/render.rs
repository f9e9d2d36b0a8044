use photoloss::Image;

/// RGBA bytes of an image in `[0, 1]`; one channel is shown as gray.
pub fn gray_rgba(img: &Image) -> Vec<u8> {
    let ch = img.channels();
    let data = img.as_slice();
    let byte = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut out = Vec::with_capacity(img.width() * img.height() * 4);
    for px in data.chunks_exact(ch) {
        if ch == 3 {
            out.extend([byte(px[0]), byte(px[1]), byte(px[2]), 255]);
        } else {
            let g = byte(px[0]);
            out.extend([g, g, g, 255]);
        }
    }
    out
}

/// Black-red-yellow-white ramp over `[0, max]`; masked-out pixels are black
/// and transparent.
pub fn heat_rgba(values: &[f64], mask: Option<&[bool]>, max: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for (i, &v) in values.iter().enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            out.extend([0, 0, 0, 0]);
            continue;
        }
        let t = if v.is_finite() { (v / max).clamp(0.0, 1.0) * 3.0 } else { 3.0 };
        let ramp = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
        out.extend([ramp(t), ramp(t - 1.0), ramp(t - 2.0), 255]);
    }
    out
}
