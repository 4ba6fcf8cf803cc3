//! Dataset-mean amplitude spectra for power equalisation.
//!
//! Binary layout, all little-endian:
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 4     | magic `AMPS`                              |
//! | 4     | u32 format version (1)                    |
//! | 4     | u32 width                                 |
//! | 4     | u32 height                                |
//! | 4     | u32 channels                              |
//! | 8·N   | f64 amplitudes, per channel, row-major    |
//!
//! Amplitudes are unnormalised DFT magnitudes with the DC term at index 0.

use std::path::Path;

use crate::fft;
use crate::raster::RasterImage;
use crate::DistortError;

const MAGIC: &[u8; 4] = b"AMPS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSpectrum {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl AmplitudeSpectrum {
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.values[c * n..(c + 1) * n]
    }

    pub fn of_image(img: &RasterImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let values = img.planes().flat_map(|p| fft::forward(w, h, p).into_iter().map(|c| c.norm())).collect();
        AmplitudeSpectrum { width: w, height: h, channels: img.channels(), values }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.width as u32, self.height as u32, self.channels as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DistortError> {
        let bad = |m: &str| DistortError::SpectrumFormat(m.to_owned());
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(bad("missing AMPS header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
        if word(0) != VERSION as usize {
            return Err(bad(&format!("unsupported version {}", word(0))));
        }
        let (width, height, channels) = (word(1), word(2), word(3));
        let n = width * height * channels;
        if n == 0 || !(channels == 1 || channels == 3) {
            return Err(bad(&format!("bad dimensions {width}x{height}x{channels}")));
        }
        if bytes.len() != 20 + 8 * n {
            return Err(bad(&format!("expected {} value bytes, found {}", 8 * n, bytes.len() - 20)));
        }
        let values: Vec<f64> =
            bytes[20..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(bad("amplitudes must be finite and non-negative"));
        }
        Ok(AmplitudeSpectrum { width, height, channels, values })
    }

    pub fn save(&self, path: &Path) -> Result<(), DistortError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| DistortError::Io { path: path.to_owned(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self, DistortError> {
        let bytes = std::fs::read(path).map_err(|e| DistortError::Io { path: path.to_owned(), source: e })?;
        Self::from_bytes(&bytes)
    }
}

/// Per-channel mean of the DFT magnitudes of `images`.
pub fn mean_amplitude_spectrum(images: &[RasterImage]) -> Result<AmplitudeSpectrum, DistortError> {
    let first = images.first().ok_or(DistortError::EmptyImageSet)?;
    if let Some(other) = images.iter().find(|i| !i.same_shape(first)) {
        return Err(DistortError::DimensionMismatch {
            expected: (first.width(), first.height(), first.channels()),
            found: (other.width(), other.height(), other.channels()),
        });
    }
    let mut acc = vec![0.0; first.data().len()];
    for img in images {
        for (a, v) in acc.iter_mut().zip(AmplitudeSpectrum::of_image(img).values) {
            *a += v;
        }
    }
    let n = images.len() as f64;
    Ok(AmplitudeSpectrum {
        width: first.width(),
        height: first.height(),
        channels: first.channels(),
        values: acc.into_iter().map(|v| v / n).collect(),
    })
}
