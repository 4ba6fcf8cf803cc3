//! Parametric image distortions for generating out-of-distribution stimulus
//! sets from clean source images.
//!
//! All operations are deterministic given the image, the
//! [`DistortionSpec`] and its seed. Random draws use ChaCha20 seeded with
//! the 64-bit seed of the [`DistortionSpec`]; [`generate::image_seed`] derives a per-image seed
//! from the global seed, image id and condition, so any subset of a dataset
//! regenerates identically regardless of thread count.

use std::path::PathBuf;

pub mod generate;
pub mod ops;
pub mod raster;
pub mod spectrum;

mod fft;

pub use generate::{generate_dataset, GenerateJob, ManifestEntry};
pub use ops::{apply, apply_unclamped, ApplyOptions, DistortionKind, DistortionSpec, FalseColourMode, NoisePolicy};
pub use raster::RasterImage;
pub use spectrum::{mean_amplitude_spectrum, AmplitudeSpectrum};

#[derive(Debug, thiserror::Error)]
pub enum DistortError {
    #[error("level {level:?} is outside the domain of {kind}")]
    UnsupportedLevel { kind: DistortionKind, level: String },
    #[error("power equalisation needs a mean amplitude spectrum")]
    MissingSpectrum,
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: (usize, usize, usize), found: (usize, usize, usize) },
    #[error("no images supplied")]
    EmptyImageSet,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("malformed spectrum file: {0}")]
    SpectrumFormat(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Png { path: PathBuf, message: String },
    #[error("unknown category directory {0:?}")]
    UnknownCategory(String),
    #[error("source images are not class-balanced: {0}")]
    Unbalanced(String),
    #[error("image id {0:?} appears more than once")]
    DuplicateImage(String),
    #[error("condition {0:?} listed twice")]
    DuplicateCondition(String),
}
