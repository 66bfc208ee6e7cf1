//! Netpbm graymap/pixmap reading (P2, P5, P6) and P5 writing.
//!
//! Pixmaps are reduced to luma with `0.299 R + 0.587 G + 0.114 B`, rounded to
//! the nearest integer. Samples with a maxval below 255 are rescaled to the
//! full 8-bit range.

use thiserror::Error;

use crate::image::{GrayImage, ImageError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PnmError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported format `{0}` (expected P2, P5 or P6)")]
    UnsupportedFormat(String),
    #[error("unsupported maxval {0} (must be 1..=255)")]
    UnsupportedMaxval(u32),
    #[error("truncated payload: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed sample `{0}`")]
    MalformedSample(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    AsciiGray,
    BinaryGray,
    BinaryRgb,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            if self.bytes[self.pos] == b'#' {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn header_number(&mut self, what: &str) -> Result<u32, PnmError> {
        let tok = self
            .token()
            .ok_or_else(|| PnmError::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                PnmError::MalformedHeader(format!(
                    "invalid {what} `{}`",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8
}

fn rescale(v: u32, maxval: u32) -> u8 {
    if maxval == 255 {
        v as u8
    } else {
        ((v as f64) * 255.0 / maxval as f64).round() as u8
    }
}

/// Decodes a P2, P5 or P6 file into a grayscale image.
pub fn decode(bytes: &[u8]) -> Result<GrayImage, PnmError> {
    if bytes.len() < 2 {
        return Err(PnmError::MalformedHeader("file too short".into()));
    }
    let kind = match &bytes[..2] {
        b"P2" => Kind::AsciiGray,
        b"P5" => Kind::BinaryGray,
        b"P6" => Kind::BinaryRgb,
        other if other[0] == b'P' => {
            return Err(PnmError::UnsupportedFormat(
                String::from_utf8_lossy(other).into_owned(),
            ))
        }
        _ => return Err(PnmError::MalformedHeader("missing magic number".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() && bytes[cur.pos] != b'#' {
        return Err(PnmError::MalformedHeader("magic number not followed by whitespace".into()));
    }
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PnmError::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(PnmError::UnsupportedMaxval(maxval));
    }
    let (w, h) = (width as usize, height as usize);
    let count = w * h;

    let pixels = match kind {
        Kind::AsciiGray => {
            let mut px = Vec::with_capacity(count);
            while px.len() < count {
                let Some(tok) = cur.token() else {
                    return Err(PnmError::Truncated {
                        expected: count,
                        found: px.len(),
                    });
                };
                let v = std::str::from_utf8(tok)
                    .ok()
                    .and_then(|s| s.parse::<u32>().ok())
                    .filter(|&v| v <= maxval)
                    .ok_or_else(|| PnmError::MalformedSample(String::from_utf8_lossy(tok).into_owned()))?;
                px.push(rescale(v, maxval));
            }
            px
        }
        Kind::BinaryGray | Kind::BinaryRgb => {
            // exactly one whitespace byte separates maxval from the raster
            match bytes.get(cur.pos) {
                Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
                _ => return Err(PnmError::MalformedHeader("missing raster separator".into())),
            }
            let channels = if kind == Kind::BinaryRgb { 3 } else { 1 };
            let raster = &bytes[cur.pos..];
            let needed = count * channels;
            if raster.len() < needed {
                return Err(PnmError::Truncated {
                    expected: count,
                    found: raster.len() / channels,
                });
            }
            let check = |v: u8| {
                if v as u32 > maxval {
                    Err(PnmError::MalformedSample(v.to_string()))
                } else {
                    Ok(rescale(v as u32, maxval))
                }
            };
            if channels == 1 {
                raster[..needed].iter().map(|&v| check(v)).collect::<Result<_, _>>()?
            } else {
                raster[..needed]
                    .chunks_exact(3)
                    .map(|c| Ok(luma(check(c[0])?, check(c[1])?, check(c[2])?)))
                    .collect::<Result<_, PnmError>>()?
            }
        }
    };
    Ok(GrayImage::new(w, h, pixels)?)
}

/// Encodes as binary graymap (P5, maxval 255).
pub fn encode_p5(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

/// Reads only the header and returns `(width, height)`.
pub fn dimensions(bytes: &[u8]) -> Result<(u32, u32), PnmError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(PnmError::MalformedHeader("missing magic number".into()));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    Ok((width, height))
}
