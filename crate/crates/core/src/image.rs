//! Grayscale images and their on-disk formats.
//!
//! Two formats are supported: binary/ASCII PGM (`P5`/`P2`, maxval 255 or
//! 65535) and `DUB1`, a raw little-endian f32 tensor file:
//!
//! ```text
//! b"DUB1" | u32 rank | rank x u32 extent | prod(extents) x f32
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const DUB1_MAGIC: &[u8; 4] = b"DUB1";

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
    range: (f32, f32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm8,
    Pgm16,
    F32Raw,
}

impl ImageFormat {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "pgm8" => Ok(ImageFormat::Pgm8),
            "pgm16" => Ok(ImageFormat::Pgm16),
            "f32raw" | "f32" => Ok(ImageFormat::F32Raw),
            other => Err(Error::InvalidArgument(format!("unknown image format {other:?}"))),
        }
    }

    /// Guess from a file extension: `.pgm` is 16-bit, anything else DUB1.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => ImageFormat::Pgm16,
            _ => ImageFormat::F32Raw,
        }
    }
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image extents must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("image pixels"));
        }
        Ok(Image {
            height,
            width,
            pixels,
            range: (0.0, 1.0),
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn with_range(mut self, min: f32, max: f32) -> Result<Self> {
        if !(min < max) {
            return Err(Error::InvalidArgument(format!("empty range ({min}, {max})")));
        }
        self.range = (min, max);
        Ok(self)
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

    pub fn range(&self) -> (f32, f32) {
        self.range
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.pixels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            })
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Result<Image> {
        let img = Image::new(self.height, self.width, self.pixels.iter().map(|&p| f(p)).collect())?;
        Ok(Image {
            range: self.range,
            ..img
        })
    }

    pub fn clamp(&self, lo: f32, hi: f32) -> Image {
        Image {
            pixels: self.pixels.iter().map(|p| p.clamp(lo, hi)).collect(),
            ..self.clone()
        }
    }

    /// Copies the `rows x cols` window starting at (`top`, `left`).
    pub fn crop(&self, top: usize, left: usize, rows: usize, cols: usize) -> Result<Image> {
        if top + rows > self.height || left + cols > self.width {
            return Err(Error::InvalidArgument(format!(
                "crop {rows}x{cols}@({top},{left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(rows * cols);
        for r in top..top + rows {
            pixels.extend_from_slice(&self.pixels[r * self.width + left..r * self.width + left + cols]);
        }
        Ok(Image {
            range: self.range,
            ..Image::new(rows, cols, pixels)?
        })
    }

    /// Extends the bottom and right edges by mirror reflection (edge pixel
    /// not repeated) to `rows x cols`.
    pub fn pad_reflect(&self, rows: usize, cols: usize) -> Result<Image> {
        if rows < self.height || cols < self.width {
            return Err(Error::InvalidArgument("pad target smaller than image".into()));
        }
        let reflect = |i: usize, n: usize| -> usize {
            if n == 1 {
                return 0;
            }
            let period = 2 * (n - 1);
            let m = i % period;
            if m < n {
                m
            } else {
                period - m
            }
        };
        let (h, w) = (self.height, self.width);
        let img = Image::from_fn(rows, cols, |r, c| self.get(reflect(r, h), reflect(c, w)))?;
        Ok(Image {
            range: self.range,
            ..img
        })
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 2 {
        return Err(Error::UnsupportedMagic {
            path: path.to_path_buf(),
            magic: String::from_utf8_lossy(&bytes).into_owned(),
        });
    }
    match &bytes[..2] {
        b"P5" | b"P2" => parse_pgm(path, &bytes),
        b"DU" if bytes.starts_with(DUB1_MAGIC) => {
            let (shape, data) = parse_dub1(path, &bytes)?;
            match shape.as_slice() {
                &[h, w] => Image::new(h, w, data),
                _ => Err(malformed(
                    path,
                    format!("expected a rank-2 tensor, got shape {shape:?}"),
                )),
            }
        }
        _ => Err(Error::UnsupportedMagic {
            path: path.to_path_buf(),
            magic: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        }),
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Option<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()?.parse().ok()
    }
}

fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<Image> {
    let binary = &bytes[..2] == b"P5";
    let mut hr = HeaderReader { bytes, pos: 2 };
    let width = hr.number().ok_or_else(|| malformed(path, "missing width"))? as usize;
    let height = hr.number().ok_or_else(|| malformed(path, "missing height"))? as usize;
    let maxval = hr.number().ok_or_else(|| malformed(path, "missing maxval"))?;
    if width == 0 || height == 0 {
        return Err(malformed(path, "zero extent"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed(path, format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width * height;
    let scale = 1.0 / maxval as f32;
    let values: Vec<u32> = if binary {
        // exactly one whitespace byte separates the header from the raster
        if hr.pos >= bytes.len() || !bytes[hr.pos].is_ascii_whitespace() {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: n,
                found: 0,
            });
        }
        let raster = &bytes[hr.pos + 1..];
        let bpp = if maxval > 255 { 2 } else { 1 };
        if raster.len() < n * bpp {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: n * bpp,
                found: raster.len(),
            });
        }
        if bpp == 1 {
            raster[..n].iter().map(|&b| b as u32).collect()
        } else {
            raster[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
                .collect()
        }
    } else {
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            match hr.number() {
                Some(x) => v.push(x),
                None if hr.pos >= bytes.len() => {
                    return Err(Error::Truncated {
                        path: path.to_path_buf(),
                        expected: n,
                        found: i,
                    })
                }
                None => return Err(malformed(path, format!("bad sample at index {i}"))),
            }
        }
        v
    };
    if let Some(bad) = values.iter().find(|&&v| v > maxval) {
        return Err(malformed(path, format!("sample {bad} exceeds maxval {maxval}")));
    }
    Image::new(height, width, values.into_iter().map(|v| v as f32 * scale).collect())
}

pub fn write_image(img: &Image, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        ImageFormat::F32Raw => encode_dub1(&[img.height, img.width], &img.pixels),
        ImageFormat::Pgm8 => encode_pgm(img, 255),
        ImageFormat::Pgm16 => encode_pgm(img, 65535),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Clamps into the declared range, maps it onto `0..=maxval`, rounds half up.
pub fn quantize(value: f32, range: (f32, f32), maxval: u32) -> u32 {
    let (lo, hi) = range;
    let unit = ((value.clamp(lo, hi) - lo) / (hi - lo)) as f64;
    ((unit * maxval as f64 + 0.5).floor() as u32).min(maxval)
}

fn encode_pgm(img: &Image, maxval: u32) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    for &p in &img.pixels {
        let q = quantize(p, img.range, maxval);
        if maxval > 255 {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    out
}

pub fn encode_dub1(shape: &[usize], data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * shape.len() + 4 * data.len());
    out.extend_from_slice(DUB1_MAGIC);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn parse_dub1(path: &Path, bytes: &[u8]) -> Result<(Vec<usize>, Vec<f32>)> {
    let word = |at: usize| -> Option<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };
    let rank = word(4).ok_or_else(|| malformed(path, "missing rank"))? as usize;
    if rank > 8 {
        return Err(malformed(path, format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        shape.push(word(8 + 4 * i).ok_or_else(|| malformed(path, "missing extent"))? as usize);
    }
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| malformed(path, "extent overflow"))?;
    let start = 8 + 4 * rank;
    let payload = &bytes[start..];
    if payload.len() != numel * 4 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: numel * 4,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((shape, data))
}

/// Reads a DUB1 file of any rank.
pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<f32>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !bytes.starts_with(DUB1_MAGIC) {
        return Err(Error::UnsupportedMagic {
            path: path.to_path_buf(),
            magic: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        });
    }
    parse_dub1(path, &bytes)
}

pub fn write_tensor_file(path: impl AsRef<Path>, shape: &[usize], data: &[f32]) -> Result<()> {
    let path = path.as_ref();
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::InvalidArgument(format!(
            "shape {shape:?} does not match {} values",
            data.len()
        )));
    }
    fs::write(path, encode_dub1(shape, data)).map_err(|e| Error::io(path, e))
}
