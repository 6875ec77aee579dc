//! Grayscale images and the PGM (Netpbm graymap) codec.
//!
//! Pixels are kept in double precision on the nominal [0, 255] scale. Values
//! are quantized only when an image is written back out as P5.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Dense grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array2<f64>,
}

impl Image {
    /// Wraps a pixel array. Fails on an empty array or non-finite pixels.
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        let (rows, cols) = pixels.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::arg(format!("image must be non-empty, got {rows}x{cols}")));
        }
        if let Some(bad) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "pixel {bad} is not finite ({})",
                pixels.iter().nth(bad).unwrap()
            )));
        }
        Ok(Image {
            pixels: pixels.as_standard_layout().into_owned(),
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "pixel buffer has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        let pixels = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::shape(e.to_string()))?;
        Image::new(pixels)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Image::new(Array2::zeros((rows, cols)))
    }

    pub fn rows(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn cols(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pixels.dim()
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array2<f64> {
        self.pixels
    }

    pub fn mean(&self) -> f64 {
        self.pixels.sum() / self.pixels.len() as f64
    }
}

/// Parses a P5 (binary) or P2 (ASCII) graymap with maxval at most 255.
///
/// Sample values are taken as-is; a file with maxval below 255 is not
/// rescaled.
pub fn image_from_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(2).ok_or_else(|| Error::parse(0, "missing magic number"))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(Error::parse(0, "expected magic P5 or P2")),
    };
    let width = cur.header_int("width")?;
    let height = cur.header_int("height")?;
    let maxval_offset = cur.pos;
    let maxval = cur.header_int("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(maxval_offset, "image dimensions must be positive"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(maxval_offset, format!("maxval {maxval} outside 1..=255")));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse(0, "image dimensions overflow"))?;

    let mut data = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        match cur.bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(Error::parse(cur.pos, "expected whitespace after maxval")),
        }
        let start = cur.pos;
        let raster = cur.take(count).ok_or_else(|| {
            Error::parse(
                bytes.len(),
                format!("truncated raster: need {count} bytes from offset {start}"),
            )
        })?;
        for (i, &b) in raster.iter().enumerate() {
            if b as usize > maxval {
                return Err(Error::parse(start + i, format!("sample {b} exceeds maxval {maxval}")));
            }
            data.push(b as f64);
        }
    } else {
        for _ in 0..count {
            let offset = cur.pos;
            let v = cur
                .next_int()?
                .ok_or_else(|| Error::parse(bytes.len(), "truncated ASCII raster"))?;
            if v > maxval {
                return Err(Error::parse(offset, format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64);
        }
    }
    Image::from_vec(height, width, data)
}

/// Encodes as binary P5 with maxval 255. Pixels are rounded half away from
/// zero and clamped to [0, 255].
pub fn image_to_pgm(img: &Image) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.cols(), img.rows());
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.pixels.iter().map(|&v| quantize(v)));
    out
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    /// Reads the next decimal token; `Ok(None)` at end of input.
    fn next_int(&mut self) -> Result<Option<usize>> {
        self.skip_separators();
        let start = self.pos;
        while matches!(self.bytes.get(self.pos), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return match self.bytes.get(self.pos) {
                None => Ok(None),
                Some(&b) => Err(Error::parse(start, format!("unexpected byte 0x{b:02x}"))),
            };
        }
        if let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_whitespace() && b != b'#' {
                return Err(Error::parse(self.pos, format!("unexpected byte 0x{b:02x}")));
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse::<usize>()
            .map(Some)
            .map_err(|_| Error::parse(start, format!("integer {text} out of range")))
    }

    fn header_int(&mut self, field: &str) -> Result<usize> {
        let offset = self.pos;
        self.next_int()?
            .ok_or_else(|| Error::parse(offset, format!("header ended before {field}")))
    }
}
