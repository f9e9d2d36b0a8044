use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-octave 3D value noise evaluated on the surface, giving a
/// view-independent albedo in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSpec {
    pub seed: u64,
    pub octaves: u32,
    /// Lattice cells per scene unit of the first octave.
    pub base_frequency: f64,
    /// Amplitude ratio between consecutive octaves.
    pub persistence: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec {
            seed: 7,
            octaves: 3,
            base_frequency: 1.5,
            persistence: 0.5,
        }
    }
}

impl TextureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.octaves == 0 || self.octaves > 12 {
            return Err(Error::invalid(format!("texture octaves {} not in 1..=12", self.octaves)));
        }
        if !(self.base_frequency > 0.0) || !self.base_frequency.is_finite() {
            return Err(Error::invalid("texture base_frequency must be positive"));
        }
        if !(self.persistence > 0.0 && self.persistence <= 1.0) {
            return Err(Error::invalid("texture persistence must be in (0, 1]"));
        }
        Ok(())
    }

    /// Albedo of channel `channel` at world point `p`.
    pub fn sample(&self, p: &Vector3<f64>, channel: usize) -> f64 {
        let mut freq = self.base_frequency;
        let mut amp = 1.0;
        let mut total = 0.0;
        let mut norm = 0.0;
        for octave in 0..self.octaves {
            let key = self.seed ^ ((channel as u64) << 48) ^ ((octave as u64) << 40);
            total += amp * value_noise(p * freq, key);
            norm += amp;
            freq *= 2.0;
            amp *= self.persistence;
        }
        total / norm
    }
}

fn mix(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn lattice(ix: i64, iy: i64, iz: i64, key: u64) -> f64 {
    let h = mix(mix(mix(key ^ ix as u64) ^ iy as u64) ^ iz as u64);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(p: Vector3<f64>, key: u64) -> f64 {
    let base = p.map(f64::floor);
    let (ix, iy, iz) = (base.x as i64, base.y as i64, base.z as i64);
    let (fx, fy, fz) = (fade(p.x - base.x), fade(p.y - base.y), fade(p.z - base.z));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let corner = |dx: i64, dy: i64, dz: i64| lattice(ix + dx, iy + dy, iz + dz, key);
    let x00 = lerp(corner(0, 0, 0), corner(1, 0, 0), fx);
    let x10 = lerp(corner(0, 1, 0), corner(1, 1, 0), fx);
    let x01 = lerp(corner(0, 0, 1), corner(1, 0, 1), fx);
    let x11 = lerp(corner(0, 1, 1), corner(1, 1, 1), fx);
    lerp(lerp(x00, x10, fy), lerp(x01, x11, fy), fz)
}
