use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense H×W grid of scalars, row-major, `(u, v)` = (column, row).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("field dimensions must be non-zero"));
        }
        if data.len() != width * height {
            return Err(Error::shape(
                format!("{} values for {width}x{height}", width * height),
                data.len(),
            ));
        }
        Ok(Field { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Field {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Field { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        self.data[v * self.width + u] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Field {
        Field {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::shape(
                format!("{width}x{height}"),
                format!("{}x{}", self.width, self.height),
            ));
        }
        Ok(())
    }
}

/// Per-pixel boolean mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(width * height, data.len()));
        }
        Ok(Mask { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Mask {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn all(&self) -> bool {
        self.data.iter().all(|&b| b)
    }

    pub fn none(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

/// H×W×C intensities in `[0, 1]`, channel-interleaved, with C ∈ {1, 3}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be non-zero"));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(width * height * channels, data.len()));
        }
        if data.iter().any(|x| x.is_nan()) {
            return Err(Error::invalid("image contains NaN"));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image from a per-pixel closure returning the channel values.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for v in 0..height {
            for u in 0..width {
                for c in 0..channels {
                    data.push(f(u, v, c));
                }
            }
        }
        Image::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize) -> f64 {
        self.data[(v * self.width + u) * self.channels + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &Image) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::shape(self.shape_str(), other.shape_str()));
        }
        Ok(())
    }

    pub(crate) fn check_size(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::shape(format!("{width}x{height}"), self.shape_str()));
        }
        Ok(())
    }

    fn shape_str(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }

    /// Channel-averaged intensity as a scalar field.
    pub fn luminance(&self) -> Field {
        let c = self.channels;
        Field::from_fn(self.width, self.height, |u, v| {
            (0..c).map(|k| self.get(u, v, k)).sum::<f64>() / c as f64
        })
    }

    /// Single-channel image from a field, values clamped to `[0, 1]`.
    pub fn from_field(field: &Field) -> Self {
        Image {
            width: field.width(),
            height: field.height(),
            channels: 1,
            data: field.as_slice().iter().map(|x| x.clamp(0.0, 1.0)).collect(),
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn mean_abs_diff(&self, other: &Image, mask: Option<&Mask>) -> Result<f64> {
        self.check_same_shape(other)?;
        let c = self.channels;
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..self.width * self.height {
            if mask.is_some_and(|m| !m.as_slice()[i]) {
                continue;
            }
            for k in 0..c {
                sum += (self.data[i * c + k] - other.data[i * c + k]).abs();
            }
            count += c;
        }
        if count == 0 {
            return Err(Error::invalid("mask excludes every pixel"));
        }
        Ok(sum / count as f64)
    }
}

fn check_positive(field: &Field, what: &str) -> Result<()> {
    if let Some(x) = field.as_slice().iter().find(|x| !x.is_finite() || **x <= 0.0) {
        return Err(Error::invalid(format!("{what} must be finite and positive, found {x}")));
    }
    Ok(())
}

/// Per-pixel z-depth in scene units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMap(Field);

impl DepthMap {
    pub fn new(field: Field) -> Result<Self> {
        check_positive(&field, "depth")?;
        Ok(DepthMap(field))
    }

    pub fn field(&self) -> &Field {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn to_inverse(&self) -> InverseDepthMap {
        InverseDepthMap(self.0.map(|x| 1.0 / x))
    }
}

/// Per-pixel reciprocal depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseDepthMap(Field);

impl InverseDepthMap {
    pub fn new(field: Field) -> Result<Self> {
        check_positive(&field, "inverse depth")?;
        Ok(InverseDepthMap(field))
    }

    pub fn field(&self) -> &Field {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn to_depth(&self) -> DepthMap {
        DepthMap(self.0.map(|x| 1.0 / x))
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        InverseDepthMap::new(self.0.map(|x| x * k))
    }
}
