//! Image clarity as the mean per-pixel gradient magnitude.
//!
//! The default operator uses central differences `(I(x+1) - I(x-1)) / 2` in
//! the interior and one-sided differences on the border, so every pixel
//! contributes and the mean runs over `width * height` values. A normalized
//! 3x3 Sobel operator is available for comparison.
//!
//! Summation is row-major with Neumaier compensation, so results are
//! reproducible bit for bit.

use crate::image::{GrayImage, ImageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientOperator {
    #[default]
    CentralDifference,
    /// Sobel kernels scaled by 1/8 (unit response to a unit ramp), with
    /// replicated borders.
    Sobel,
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

fn diff(values: &[f64], len: usize, idx: impl Fn(usize) -> usize, i: usize) -> f64 {
    if i == 0 {
        values[idx(1)] - values[idx(0)]
    } else if i == len - 1 {
        values[idx(len - 1)] - values[idx(len - 2)]
    } else {
        (values[idx(i + 1)] - values[idx(i - 1)]) / 2.0
    }
}

fn check_size(width: usize, height: usize) -> Result<(), ImageError> {
    if width < 2 || height < 2 {
        Err(ImageError::TooSmall { width, height })
    } else {
        Ok(())
    }
}

/// Mean gradient magnitude of a real-valued raster.
pub fn average_gradient_magnitude_real(
    width: usize,
    height: usize,
    values: &[f64],
    op: GradientOperator,
) -> Result<f64, ImageError> {
    check_size(width, height)?;
    if values.len() != width * height {
        return Err(ImageError::BufferSize {
            expected: width * height,
            got: values.len(),
        });
    }
    let mut acc = CompensatedSum::default();
    match op {
        GradientOperator::CentralDifference => {
            for y in 0..height {
                for x in 0..width {
                    let gx = diff(values, width, |i| y * width + i, x);
                    let gy = diff(values, height, |j| j * width + x, y);
                    acc.add(gx.hypot(gy));
                }
            }
        }
        GradientOperator::Sobel => {
            let at = |x: isize, y: isize| {
                let xx = x.clamp(0, width as isize - 1) as usize;
                let yy = y.clamp(0, height as isize - 1) as usize;
                values[yy * width + xx]
            };
            for y in 0..height as isize {
                for x in 0..width as isize {
                    let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                        - at(x - 1, y - 1)
                        - 2.0 * at(x - 1, y)
                        - at(x - 1, y + 1))
                        / 8.0;
                    let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                        - at(x - 1, y - 1)
                        - 2.0 * at(x, y - 1)
                        - at(x + 1, y - 1))
                        / 8.0;
                    acc.add(gx.hypot(gy));
                }
            }
        }
    }
    Ok(acc.total() / (width * height) as f64)
}

/// Mean central-difference gradient magnitude of an 8-bit image.
pub fn average_gradient_magnitude(img: &GrayImage) -> Result<f64, ImageError> {
    average_gradient_magnitude_with(img, GradientOperator::CentralDifference)
}

pub fn average_gradient_magnitude_with(img: &GrayImage, op: GradientOperator) -> Result<f64, ImageError> {
    average_gradient_magnitude_real(img.width(), img.height(), &img.to_real(), op)
}
