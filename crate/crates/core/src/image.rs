//! Raster containers: three-channel images and per-pixel depth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Row-major RGB raster with interleaved `f64` channels.
///
/// The same container holds display-space values (gamma encoded, in `[0, 1]`)
/// and linear-light values; which one a given image holds is stated by the
/// function that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("image dimensions must be nonzero"));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::LengthMismatch {
                what: "image buffer",
                left: data.len(),
                right: width * height * CHANNELS,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("image contains non-finite values"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be nonzero");
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be nonzero");
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        self.data[i..i + CHANNELS].copy_from_slice(&rgb);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims(&self, other: &Image, what: &'static str) -> Result<()> {
        check_dims(what, (self.width, self.height), (other.width, other.height))
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_dims(
    what: &'static str,
    left: (usize, usize),
    right: (usize, usize),
) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch {
            what,
            left_w: left.0,
            left_h: left.1,
            right_w: right.0,
            right_h: right.1,
        });
    }
    Ok(())
}

/// Per-pixel scene depth. Every entry is finite and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("depth map dimensions must be nonzero"));
        }
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                what: "depth buffer",
                left: values.len(),
                right: width * height,
            });
        }
        if let Some((i, d)) = values
            .iter()
            .enumerate()
            .find(|(_, d)| !(d.is_finite() && **d > 0.0))
        {
            return Err(Error::domain(format!(
                "depth at ({}, {}) is {d}; depth must be finite and positive",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn matches(&self, image: &Image) -> Result<()> {
        check_dims(
            "image vs depth",
            (image.width(), image.height()),
            self.dims(),
        )
    }

    pub fn scaled(&self, k: f64) -> Result<DepthMap> {
        DepthMap::new(
            self.width,
            self.height,
            self.values.iter().map(|d| d * k).collect(),
        )
    }

    pub fn disparity_range(&self) -> DisparityRange {
        let (near, far) = self
            .values
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
                (lo.min(d), hi.max(d))
            });
        DisparityRange { near, far }
    }

    /// Normalized disparity per pixel, nearest point at 1 and farthest at 0.
    pub fn normalized_disparity(&self) -> Vec<f64> {
        let range = self.disparity_range();
        self.values
            .iter()
            .map(|&d| range.normalize_unchecked(d))
            .collect()
    }
}

/// Depth extent of a scene, used to map depth onto normalized disparity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparityRange {
    /// Smallest depth (maps to disparity 1).
    pub near: f64,
    /// Largest depth (maps to disparity 0).
    pub far: f64,
}

impl DisparityRange {
    pub fn new(near: f64, far: f64) -> Result<Self> {
        if !(near.is_finite() && far.is_finite() && near > 0.0 && far >= near) {
            return Err(Error::domain(format!(
                "invalid depth range [{near}, {far}]"
            )));
        }
        Ok(Self { near, far })
    }

    pub fn normalize(&self, depth: f64) -> Result<f64> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::domain(format!(
                "depth must be finite and positive, got {depth}"
            )));
        }
        Ok(self.normalize_unchecked(depth))
    }

    fn normalize_unchecked(&self, depth: f64) -> f64 {
        let inv_near = 1.0 / self.near;
        let inv_far = 1.0 / self.far;
        let span = inv_near - inv_far;
        // a flat scene is entirely "nearest"
        if span <= 0.0 {
            return 1.0;
        }
        ((1.0 / depth - inv_far) / span).clamp(0.0, 1.0)
    }
}
