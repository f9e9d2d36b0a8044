//! 8-bit intensity images and 16-bit depth images carrying their scale.

use std::path::Path;

use photoloss::{DepthMap, Field, Image};

use super::{read, write_atomic};
use crate::error::{CliError, Result};

/// tEXt key holding the metric value of one 16-bit step.
pub const SCALE_KEY: &str = "scale";

fn encoder_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::io(path, std::io::Error::other(e.to_string()))
}

fn color(channels: usize) -> png::ColorType {
    if channels == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    }
}

fn encode(
    path: &Path,
    width: usize,
    height: usize,
    channels: usize,
    depth: png::BitDepth,
    text: Option<String>,
    data: &[u8],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
    enc.set_color(color(channels));
    enc.set_depth(depth);
    if let Some(t) = text {
        enc.add_text_chunk(SCALE_KEY.into(), t).map_err(|e| encoder_error(path, e))?;
    }
    let mut writer = enc.write_header().map_err(|e| encoder_error(path, e))?;
    writer.write_image_data(data).map_err(|e| encoder_error(path, e))?;
    writer.finish().map_err(|e| encoder_error(path, e))?;
    Ok(out)
}

/// Intensities in `[0, 1]`, clamped and quantized to 8 or 16 bits.
pub fn write_image(path: &Path, image: &Image, bits: u8) -> Result<()> {
    let (data, depth) = match bits {
        8 => (
            image.as_slice().iter().map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
            png::BitDepth::Eight,
        ),
        16 => (
            image
                .as_slice()
                .iter()
                .flat_map(|x| ((x.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes())
                .collect::<Vec<u8>>(),
            png::BitDepth::Sixteen,
        ),
        _ => return Err(CliError::Config(format!("image_bits must be 8 or 16, got {bits}"))),
    };
    let bytes = encode(path, image.width(), image.height(), image.channels(), depth, None, &data)?;
    write_atomic(path, &bytes)
}

/// 16-bit grayscale where `depth = value · scale`; the scale maps the
/// largest depth to 65535 and is stored as a text chunk.
pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let f = depth.field();
    let max = f.as_slice().iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { max / 65535.0 } else { 1.0 };
    let data: Vec<u8> = f
        .as_slice()
        .iter()
        .flat_map(|d| ((d / scale).round().clamp(0.0, 65535.0) as u16).to_be_bytes())
        .collect();
    let bytes = encode(path, f.width(), f.height(), 1, png::BitDepth::Sixteen, Some(scale.to_string()), &data)?;
    write_atomic(path, &bytes)
}

/// Reads a 16-bit depth PNG written by [`write_depth`].
pub fn read_depth(path: &Path) -> Result<Field> {
    let parse = |message: String| CliError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message,
    };
    let bytes = read(path)?;
    let mut reader = png::Decoder::new(std::io::Cursor::new(bytes))
        .read_info()
        .map_err(|e| parse(e.to_string()))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Sixteen || info.color_type != png::ColorType::Grayscale {
        return Err(parse("expected a 16-bit grayscale PNG".into()));
    }
    let scale: f64 = info
        .uncompressed_latin1_text
        .iter()
        .find(|t| t.keyword == SCALE_KEY)
        .ok_or_else(|| parse(format!("missing {SCALE_KEY:?} text chunk")))?
        .text
        .parse()
        .map_err(|e| parse(format!("bad scale: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size()];
    reader.next_frame(&mut buf).map_err(|e| parse(e.to_string()))?;
    let values = buf
        .chunks_exact(2)
        .take(w * h)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
        .collect();
    Field::new(w, h, values).map_err(|e| parse(e.to_string()))
}
