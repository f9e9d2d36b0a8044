//! Single-channel PFM: `Pf` header, little-endian float32, rows bottom-up.

use std::path::Path;

use photoloss::{DepthMap, Field};

use super::{read, write_atomic};
use crate::error::{CliError, Result};

pub fn encode(field: &Field) -> Vec<u8> {
    let (w, h) = (field.width(), field.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for v in (0..h).rev() {
        for u in 0..w {
            out.extend_from_slice(&(field.get(u, v) as f32).to_le_bytes());
        }
    }
    out
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| std::str::from_utf8(&bytes[start..*pos]).ok()).flatten()
}

/// Parses a grayscale PFM. A negative scale means little-endian, a positive
/// one big-endian.
pub fn decode(bytes: &[u8]) -> std::result::Result<Field, String> {
    let mut pos = 0;
    match header_token(bytes, &mut pos) {
        Some("Pf") => {}
        Some("PF") => return Err("color PFM is not supported; expected Pf".into()),
        other => return Err(format!("bad magic {other:?}; expected Pf")),
    }
    let mut number = |name: &str| header_token(bytes, &mut pos).ok_or_else(|| format!("missing {name}"));
    let w: usize = number("width")?.parse().map_err(|e| format!("bad width: {e}"))?;
    let h: usize = number("height")?.parse().map_err(|e| format!("bad height: {e}"))?;
    let scale: f64 = number("scale")?.parse().map_err(|e| format!("bad scale: {e}"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format!("bad scale {scale}"));
    }
    // exactly one whitespace byte separates the header from the data
    pos += 1;
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() != 4 * w * h {
        return Err(format!("expected {} data bytes for {w}x{h}, found {}", 4 * w * h, data.len()));
    }
    let mut values = vec![0.0; w * h];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (u, v_up) = (i % w, i / w);
        values[(h - 1 - v_up) * w + u] = x as f64;
    }
    Field::new(w, h, values).map_err(|e| e.to_string())
}

pub fn write(path: &Path, field: &Field) -> Result<()> {
    write_atomic(path, &encode(field))
}

pub fn read_field(path: &Path) -> Result<Field> {
    decode(&read(path)?).map_err(|message| CliError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message,
    })
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let field = read_field(path)?;
    DepthMap::new(field).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_stored_row_is_the_bottom_row() {
        let f = Field::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode(&f);
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
        assert_eq!(first, 3.0);
    }

    #[test]
    fn reads_big_endian_and_rejects_garbage() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.5f32.to_be_bytes());
        assert_eq!(decode(&bytes).unwrap().get(0, 0), 2.5);
        assert!(decode(b"P6\n1 1\n255\n").is_err());
        assert!(decode(b"Pf\n2 2\n-1.0\n\0\0\0\0").is_err());
        assert!(decode(b"Pf\n1 1\n0\n\0\0\0\0").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_float32_exact(
            (w, h, values) in (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), prop::collection::vec(0.01f64..1e4, w * h))
            })
        ) {
            let f = Field::new(w, h, values).unwrap();
            let back = decode(&encode(&f)).unwrap();
            prop_assert_eq!((back.width(), back.height()), (w, h));
            for (a, b) in f.as_slice().iter().zip(back.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-7 * a.abs());
            }
        }
    }
}
