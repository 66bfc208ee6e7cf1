//! 8-bit grayscale rasters and the box filter used to blur them.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("gradient needs an image at least 2x2, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
}

/// Row-major luma raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from a function of `(x, y)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Rounds and clamps real values into an 8-bit image.
    pub fn from_real(width: usize, height: usize, values: &[f64]) -> Result<Self, ImageError> {
        let pixels = values.iter().map(|&v| quantize(v)).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn to_real(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    /// Copies out the `w`x`h` window at `(x0, y0)`. The window must lie
    /// inside the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<GrayImage, ImageError> {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop outside image");
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let start = y * self.width + x0;
            pixels.extend_from_slice(&self.pixels[start..start + w]);
        }
        GrayImage::new(w, h, pixels)
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Separable box blur over real values with edge replication.
///
/// Each output pixel is the mean of the `(2r+1)^2` window around it.
pub fn box_blur_real(width: usize, height: usize, values: &[f64], radius: usize) -> Vec<f64> {
    assert_eq!(values.len(), width * height);
    if radius == 0 {
        return values.to_vec();
    }
    let norm = 1.0 / (2 * radius + 1) as f64;
    let r = radius as isize;

    let mut horiz = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for dx in -r..=r {
                let xx = (x as isize + dx).clamp(0, width as isize - 1) as usize;
                acc += row[xx];
            }
            horiz[y * width + x] = acc * norm;
        }
    }

    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for dy in -r..=r {
                let yy = (y as isize + dy).clamp(0, height as isize - 1) as usize;
                acc += horiz[yy * width + x];
            }
            out[y * width + x] = acc * norm;
        }
    }
    out
}

/// Box blur of an 8-bit image, rounded back to 8 bits.
pub fn box_blur(img: &GrayImage, radius: usize) -> GrayImage {
    if radius == 0 {
        return img.clone();
    }
    let blurred = box_blur_real(img.width, img.height, &img.to_real(), radius);
    GrayImage::from_real(img.width, img.height, &blurred).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(GrayImage::new(0, 3, vec![]), Err(ImageError::EmptyImage { .. })));
        assert!(matches!(
            GrayImage::new(2, 2, vec![0; 3]),
            Err(ImageError::BufferSize { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn box_blur_preserves_constant_and_mean() {
        let img = GrayImage::filled(7, 5, 90).unwrap();
        assert_eq!(box_blur(&img, 2), img);

        let impulse: Vec<f64> = (0..81).map(|i| if i == 40 { 9.0 } else { 0.0 }).collect();
        let out = box_blur_real(9, 9, &impulse, 1);
        assert!((out.iter().sum::<f64>() - 9.0).abs() < 1e-12);
        assert!((out[40] - 1.0).abs() < 1e-12);
        assert!((out[30] - 1.0).abs() < 1e-12);
        assert_eq!(out[20], 0.0);
    }

    #[test]
    fn crop_extracts_window() {
        let img = GrayImage::from_fn(4, 3, |x, y| (y * 4 + x) as u8).unwrap();
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.pixels(), &[5, 6, 9, 10]);
    }
}
