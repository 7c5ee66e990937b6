//! Row-major real-valued image grid.

use crate::error::{Error, Result};
use crate::morphology::Mask;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Parameter(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::Parameter(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite pixel at index {i}")));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    /// Wraps a buffer that the caller guarantees has `height * width` entries.
    pub(crate) fn from_raw(height: usize, width: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), height * width);
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::Shape {
                expected: shape,
                found: self.shape(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image::from_raw(
            self.height,
            self.width,
            self.pixels.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Pixels of `inside` where the mask is set, pixels of `self` elsewhere.
    pub fn select(&self, mask: &Mask, inside: &Image) -> Result<Image> {
        self.ensure_shape(mask.shape())?;
        self.ensure_shape(inside.shape())?;
        let pixels = self
            .pixels
            .iter()
            .zip(inside.pixels())
            .zip(mask.bits())
            .map(|((&out, &inn), &m)| if m { inn } else { out })
            .collect();
        Ok(Image::from_raw(self.height, self.width, pixels))
    }

    /// `(1 - m) * self`, i.e. the image with the masked region zeroed.
    pub fn masked_out(&self, mask: &Mask) -> Result<Image> {
        self.select(mask, &Image::zeros(self.height, self.width))
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.pixels.len() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Mean of `|self - other|` over pixels where `region` is set; `None`
    /// when the region is empty.
    pub fn mean_abs_diff_in(&self, other: &Image, region: &Mask) -> Result<Option<f64>> {
        self.ensure_shape(other.shape())?;
        self.ensure_shape(region.shape())?;
        let mut total = 0.0;
        let mut n = 0usize;
        for ((a, b), &m) in self.pixels.iter().zip(other.pixels()).zip(region.bits()) {
            if m {
                total += (a - b).abs();
                n += 1;
            }
        }
        Ok((n > 0).then(|| total / n as f64))
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.pixels
            .iter()
            .zip(other.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
