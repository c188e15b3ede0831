//! Raster containers and the elementary filters every other module builds on.
//!
//! Pixels are stored row-major as `f64`. Multi-channel images interleave
//! channels per pixel (`HWC`). Values are nominally in `[0, 1]` with no gamma
//! linearization applied.

mod filters;
pub mod integral;
pub mod io;

pub use filters::{clamp_rescale, gaussian_blur, gaussian_kernel, resize_bilinear, to_grayscale};

use crate::error::{Error, Result};

/// Multi-channel floating raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageF {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be nonzero, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite samples"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    /// Builds an image by evaluating `f(y, x, c)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &ImageF) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Extracts one channel as a scalar map.
    pub fn channel(&self, c: usize) -> ScalarMap {
        assert!(c < self.channels, "channel {c} out of range");
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        ScalarMap {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Interleaves equally sized scalar maps into one image.
    pub fn from_channels(planes: &[ScalarMap]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::invalid("no channel planes supplied"))?;
        if planes.iter().any(|p| !p.same_shape(first)) {
            return Err(Error::invalid("channel planes differ in shape"));
        }
        let n = first.len();
        let mut data = Vec::with_capacity(n * planes.len());
        for i in 0..n {
            for p in planes {
                data.push(p.data[i]);
            }
        }
        Self::new(first.height, first.width, planes.len(), data)
    }

    /// Copies the `h`×`w` window whose top-left corner is `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return Err(Error::invalid(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(h * w * self.channels);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[start..start + w * self.channels]);
        }
        Ok(Self {
            height: h,
            width: w,
            channels: self.channels,
            data,
        })
    }

    /// Applies `f` to every sample of the image, keeping the shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Applies `f` channel-wise to each plane and reassembles the result.
    pub(crate) fn map_planes(&self, mut f: impl FnMut(&ScalarMap) -> Result<ScalarMap>) -> Result<Self> {
        let planes = (0..self.channels)
            .map(|c| f(&self.channel(c)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_channels(&planes)
    }

    pub(crate) fn zip_with(&self, other: &ImageF, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(shape_mismatch(
                (self.height, self.width, self.channels),
                (other.height, other.width, other.channels),
            ));
        }
        Self::new(
            self.height,
            self.width,
            self.channels,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

/// Single-channel floating map.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "map dimensions must be nonzero, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("map contains non-finite samples"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample at `(y, x)` with coordinates clamped into the map (replicate border).
    #[inline]
    pub fn get_clamped(&self, y: isize, x: isize) -> f64 {
        let yy = y.clamp(0, self.height as isize - 1) as usize;
        let xx = x.clamp(0, self.width as isize - 1) as usize;
        self.data[yy * self.width + xx]
    }

    pub fn same_shape(&self, other: &ScalarMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub(crate) fn zip_with(&self, other: &ScalarMap, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(shape_mismatch(
                (self.height, self.width, 1),
                (other.height, other.width, 1),
            ));
        }
        Self::new(
            self.height,
            self.width,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub(crate) fn from_raw_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }
}

pub(crate) fn shape_mismatch(a: (usize, usize, usize), b: (usize, usize, usize)) -> Error {
    Error::invalid(format!(
        "shape mismatch: {}x{}x{} vs {}x{}x{}",
        a.0, a.1, a.2, b.0, b.1, b.2
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths_and_nan() {
        assert!(ImageF::new(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(ImageF::new(0, 2, 1, vec![]).is_err());
        assert!(ImageF::new(1, 1, 2, vec![0.0; 2]).is_err());
        assert!(ScalarMap::new(1, 2, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn channel_split_and_merge_roundtrip() {
        let img = ImageF::from_fn(3, 4, 3, |y, x, c| (y * 12 + x * 3 + c) as f64 / 36.0).unwrap();
        let planes: Vec<_> = (0..3).map(|c| img.channel(c)).collect();
        assert_eq!(ImageF::from_channels(&planes).unwrap(), img);
    }

    #[test]
    fn crop_takes_window() {
        let img = ImageF::from_fn(4, 4, 1, |y, x, _| (y * 4 + x) as f64).unwrap();
        let c = img.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.data(), &[6.0, 7.0, 10.0, 11.0]);
        assert!(img.crop(3, 3, 2, 1).is_err());
    }
}
