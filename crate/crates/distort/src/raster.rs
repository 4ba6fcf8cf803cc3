use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};

use crate::DistortError;

/// Planar floating-point image. Channel `c`, row `y`, column `x` lives at
/// `data[(c * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self, DistortError> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(DistortError::InvalidImage(format!("{width}x{height}x{channels}")));
        }
        if data.len() != width * height * channels {
            return Err(DistortError::InvalidImage(format!("{} values for {width}x{height}x{channels}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DistortError::InvalidImage("non-finite value".into()));
        }
        Ok(RasterImage { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self, DistortError> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image from `f(x, y, c)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, DistortError> {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    // Internal constructor for already-validated shapes.
    pub(crate) fn from_planes(width: usize, height: usize, planes: Vec<Vec<f64>>) -> Self {
        let channels = planes.len();
        let data = planes.concat();
        debug_assert_eq!(data.len(), width * height * channels);
        RasterImage { width, height, channels, data }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width * self.height)
    }

    pub(crate) fn map_values(mut self, f: impl Fn(f64) -> f64) -> Self {
        for v in &mut self.data {
            *v = f(*v);
        }
        self
    }

    pub fn clamped(self) -> Self {
        self.map_values(|v| v.clamp(0.0, 1.0))
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        (self.width, self.height, self.channels) == (other.width, other.height, other.channels)
    }

    /// Largest per-value absolute difference. Panics on a shape mismatch.
    pub fn max_abs_diff(&self, other: &RasterImage) -> f64 {
        assert!(self.same_shape(other), "shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// 8-bit quantisation with round-half-to-even, interleaved.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(n * self.channels);
        for i in 0..n {
            for c in 0..self.channels {
                out.push(quantize(self.data[c * n + i]));
            }
        }
        out
    }

    pub fn from_bytes(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self, DistortError> {
        if bytes.len() != width * height * channels {
            return Err(DistortError::InvalidImage(format!("{} bytes for {width}x{height}x{channels}", bytes.len())));
        }
        Self::from_fn(width, height, channels, |x, y, c| bytes[(y * width + x) * channels + c] as f64 / 255.0)
    }

    /// Reads a PNG. Grayscale files load with one channel, everything else as RGB.
    pub fn load_png(path: &Path) -> Result<Self, DistortError> {
        let img = image::ImageReader::open(path)
            .map_err(|e| DistortError::Io { path: path.to_owned(), source: e })?
            .with_guessed_format()
            .map_err(|e| DistortError::Io { path: path.to_owned(), source: e })?
            .decode()
            .map_err(|e| DistortError::Png { path: path.to_owned(), message: e.to_string() })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        if img.color().channel_count() <= 2 {
            Self::from_bytes(w, h, 1, img.to_luma8().as_raw())
        } else {
            Self::from_bytes(w, h, 3, img.to_rgb8().as_raw())
        }
    }

    pub fn encode_png<W: Write>(&self, writer: W) -> Result<(), image::ImageError> {
        let color = if self.channels == 1 { ExtendedColorType::L8 } else { ExtendedColorType::Rgb8 };
        PngEncoder::new_with_quality(writer, CompressionType::Default, FilterType::Adaptive).write_image(
            &self.to_bytes(),
            self.width as u32,
            self.height as u32,
            color,
        )
    }

    pub fn png_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.encode_png(&mut buf).expect("in-memory PNG encoding");
        buf
    }

    pub fn save_png(&self, path: &Path) -> Result<(), DistortError> {
        let file = std::fs::File::create(path).map_err(|e| DistortError::Io { path: path.to_owned(), source: e })?;
        self.encode_png(BufWriter::new(file))
            .map_err(|e| DistortError::Png { path: path.to_owned(), message: e.to_string() })
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}
