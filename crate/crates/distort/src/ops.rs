use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rustfft::num_complex::Complex;

use crate::fft;
use crate::raster::RasterImage;
use crate::spectrum::AmplitudeSpectrum;
use crate::DistortError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistortionKind {
    Grayscale,
    FalseColour,
    Contrast,
    UniformNoise,
    LowPass,
    HighPass,
    PhaseNoise,
    PowerEqualisation,
    Rotation,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 9] = [
        DistortionKind::Grayscale,
        DistortionKind::FalseColour,
        DistortionKind::Contrast,
        DistortionKind::UniformNoise,
        DistortionKind::LowPass,
        DistortionKind::HighPass,
        DistortionKind::PhaseNoise,
        DistortionKind::PowerEqualisation,
        DistortionKind::Rotation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::Grayscale => "grayscale",
            DistortionKind::FalseColour => "false_colour",
            DistortionKind::Contrast => "contrast",
            DistortionKind::UniformNoise => "uniform_noise",
            DistortionKind::LowPass => "low_pass",
            DistortionKind::HighPass => "high_pass",
            DistortionKind::PhaseNoise => "phase_noise",
            DistortionKind::PowerEqualisation => "power_equalisation",
            DistortionKind::Rotation => "rotation",
        }
    }

    /// Kind generating the stimuli of a benchmark dataset. `None` for datasets
    /// that are not generated here (eidolons, the nonparametric sets).
    pub fn for_dataset(dataset_id: &str) -> Option<Self> {
        Some(match dataset_id {
            "colour" => DistortionKind::Grayscale,
            "false-colour" => DistortionKind::FalseColour,
            "contrast" => DistortionKind::Contrast,
            "uniform-noise" => DistortionKind::UniformNoise,
            "low-pass" => DistortionKind::LowPass,
            "high-pass" => DistortionKind::HighPass,
            "phase-scrambling" => DistortionKind::PhaseNoise,
            "power-equalisation" => DistortionKind::PowerEqualisation,
            "rotation" => DistortionKind::Rotation,
            _ => return None,
        })
    }

    /// Numeric level for a condition token.
    ///
    /// Binary kinds map their unmanipulated token to 0 and the manipulated
    /// one to 1. Contrast tokens are percentages. High-pass `inf` is the
    /// unfiltered image.
    pub fn parse_level(self, token: &str) -> Result<f64, DistortError> {
        let unsupported = || DistortError::UnsupportedLevel { kind: self, level: token.to_owned() };
        let t = token.trim();
        let level = match self {
            DistortionKind::Grayscale => match t {
                "colour" | "color" => 0.0,
                "greyscale" | "grayscale" => 1.0,
                _ => t.parse().map_err(|_| unsupported())?,
            },
            DistortionKind::FalseColour => match t {
                "true colour" | "true color" => 0.0,
                "false colour" | "false color" | "opponent colour" => 1.0,
                _ => t.parse().map_err(|_| unsupported())?,
            },
            DistortionKind::PowerEqualisation => match t {
                "original power spectrum" => 0.0,
                "equalised power spectrum" | "equalized power spectrum" => 1.0,
                _ => t.parse().map_err(|_| unsupported())?,
            },
            DistortionKind::Contrast => t.trim_end_matches('%').parse::<f64>().map_err(|_| unsupported())? / 100.0,
            DistortionKind::HighPass if t == "inf" => f64::INFINITY,
            _ => t.parse().map_err(|_| unsupported())?,
        };
        self.check_level(level).map_err(|_| unsupported())?;
        Ok(level)
    }

    pub fn check_level(self, level: f64) -> Result<(), DistortError> {
        let ok = match self {
            DistortionKind::Grayscale | DistortionKind::FalseColour | DistortionKind::PowerEqualisation => {
                level == 0.0 || level == 1.0
            }
            DistortionKind::Contrast => (0.0..=1.0).contains(&level),
            DistortionKind::UniformNoise | DistortionKind::LowPass => level.is_finite() && level >= 0.0,
            DistortionKind::HighPass => level > 0.0 && !level.is_nan(),
            DistortionKind::PhaseNoise => (0.0..=180.0).contains(&level),
            DistortionKind::Rotation => [0.0, 90.0, 180.0, 270.0].contains(&level),
        };
        if ok {
            Ok(())
        } else {
            Err(DistortError::UnsupportedLevel { kind: self, level: level.to_string() })
        }
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub level: f64,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, level: f64, seed: u64) -> Result<Self, DistortError> {
        kind.check_level(level)?;
        Ok(DistortionSpec { kind, level, seed })
    }
}

/// What uniform noise does with pixels pushed outside [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoisePolicy {
    #[default]
    Clamp,
    /// Redraw the noise value for that pixel until the result is in range.
    Resample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FalseColourMode {
    /// Invert the chromatic opponent channels, keeping luminance.
    #[default]
    Opponent,
    /// `1 - v` per RGB channel.
    RgbComplement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApplyOptions {
    /// RGB luminance weights, summing to 1.
    pub luma: [f64; 3],
    pub noise: NoisePolicy,
    pub false_colour: FalseColourMode,
}

/// ITU-R BT.601.
pub const BT601: [f64; 3] = [0.299, 0.587, 0.114];

impl Default for ApplyOptions {
    fn default() -> Self {
        ApplyOptions { luma: BT601, noise: NoisePolicy::Clamp, false_colour: FalseColourMode::Opponent }
    }
}

const MAX_RESAMPLES: usize = 64;

/// Applies `spec` and clamps the result to [0, 1].
pub fn apply(
    img: &RasterImage,
    spec: &DistortionSpec,
    opts: &ApplyOptions,
    spectrum: Option<&AmplitudeSpectrum>,
) -> Result<RasterImage, DistortError> {
    Ok(apply_unclamped(img, spec, opts, spectrum)?.clamped())
}

/// Like [`apply`] but without the final clamp. Uniform noise under
/// [`NoisePolicy::Clamp`] is still clamped, since that is its definition.
pub fn apply_unclamped(
    img: &RasterImage,
    spec: &DistortionSpec,
    opts: &ApplyOptions,
    spectrum: Option<&AmplitudeSpectrum>,
) -> Result<RasterImage, DistortError> {
    spec.kind.check_level(spec.level)?;
    let l = spec.level;
    Ok(match spec.kind {
        DistortionKind::Grayscale if l == 0.0 => img.clone(),
        DistortionKind::Grayscale => grayscale(img, &opts.luma),
        DistortionKind::FalseColour if l == 0.0 => img.clone(),
        DistortionKind::FalseColour => false_colour(img, opts),
        DistortionKind::Contrast => contrast(img, l),
        DistortionKind::UniformNoise => uniform_noise(img, l, spec.seed, opts.noise),
        DistortionKind::LowPass => low_pass(img, l),
        DistortionKind::HighPass => high_pass(img, l),
        DistortionKind::PhaseNoise => phase_noise(img, l, spec.seed),
        DistortionKind::PowerEqualisation if l == 0.0 => img.clone(),
        DistortionKind::PowerEqualisation => power_equalise(img, spectrum.ok_or(DistortError::MissingSpectrum)?)?,
        DistortionKind::Rotation => rotate(img, (l / 90.0) as usize),
    })
}

fn luminance(img: &RasterImage, w: &[f64; 3]) -> Vec<f64> {
    if img.channels() == 1 {
        return img.plane(0).to_vec();
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    (0..r.len()).map(|i| w[0] * r[i] + w[1] * g[i] + w[2] * b[i]).collect()
}

/// Luminance replicated to every channel.
pub fn grayscale(img: &RasterImage, weights: &[f64; 3]) -> RasterImage {
    let lum = luminance(img, weights);
    RasterImage::from_planes(img.width(), img.height(), vec![lum; img.channels()])
}

// With an opponent transform whose chromatic axes vanish on gray, each pixel
// splits as p = L*1 + chroma. Negating chroma gives 2L*1 - p.
fn false_colour(img: &RasterImage, opts: &ApplyOptions) -> RasterImage {
    match opts.false_colour {
        FalseColourMode::RgbComplement => img.clone().map_values(|v| 1.0 - v),
        FalseColourMode::Opponent => {
            let lum = luminance(img, &opts.luma);
            let planes = img.planes().map(|p| p.iter().zip(&lum).map(|(v, l)| 2.0 * l - v).collect()).collect();
            RasterImage::from_planes(img.width(), img.height(), planes)
        }
    }
}

pub fn contrast(img: &RasterImage, c: f64) -> RasterImage {
    if c == 1.0 {
        return img.clone();
    }
    img.clone().map_values(|v| c * (v - 0.5) + 0.5)
}

/// One noise value per pixel, shared by all channels, drawn in row-major order.
fn uniform_noise(img: &RasterImage, w: f64, seed: u64, policy: NoisePolicy) -> RasterImage {
    if w == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = img.width() * img.height();
    let src: Vec<&[f64]> = img.planes().collect();
    let mut planes: Vec<Vec<f64>> = vec![Vec::with_capacity(n); img.channels()];
    for i in 0..n {
        let mut u = w * (2.0 * rng.random::<f64>() - 1.0);
        if policy == NoisePolicy::Resample {
            let mut tries = 0;
            while tries < MAX_RESAMPLES && src.iter().any(|p| !(0.0..=1.0).contains(&(p[i] + u))) {
                u = w * (2.0 * rng.random::<f64>() - 1.0);
                tries += 1;
            }
        }
        for (out, p) in planes.iter_mut().zip(&src) {
            out.push((p[i] + u).clamp(0.0, 1.0));
        }
    }
    RasterImage::from_planes(img.width(), img.height(), planes)
}

/// Half-sample symmetric reflection (`d c b a | a b c d`), periodic beyond
/// one image length.
fn reflect(i: isize, n: usize) -> usize {
    let p = 2 * n as isize;
    let m = i.rem_euclid(p);
    if m < n as isize {
        m as usize
    } else {
        (p - 1 - m) as usize
    }
}

/// Normalised Gaussian taps over `[-r, r]`, `r = ceil(4 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

fn convolve_plane(plane: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] =
                k.iter().enumerate().map(|(j, kv)| kv * row[reflect(x as isize + j as isize - r, w)]).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] =
                k.iter().enumerate().map(|(j, kv)| kv * tmp[reflect(y as isize + j as isize - r, h) * w + x]).sum();
        }
    }
    out
}

pub fn low_pass(img: &RasterImage, sigma: f64) -> RasterImage {
    if sigma == 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let planes = img.planes().map(|p| convolve_plane(p, img.width(), img.height(), &k)).collect();
    RasterImage::from_planes(img.width(), img.height(), planes)
}

pub fn high_pass(img: &RasterImage, sigma: f64) -> RasterImage {
    if sigma.is_infinite() {
        return img.clone();
    }
    let low = low_pass(img, sigma);
    let planes =
        img.planes().zip(low.planes()).map(|(v, l)| v.iter().zip(l).map(|(v, l)| v - l + 0.5).collect()).collect();
    RasterImage::from_planes(img.width(), img.height(), planes)
}

/// Phase offsets in radians, antisymmetric under frequency negation and zero
/// at self-conjugate frequencies, so that real images stay real. Drawn in
/// row-major frequency order, one draw per conjugate pair.
fn phase_field(w: usize, h: usize, degrees: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut phi = vec![0.0; w * h];
    for i in 0..w * h {
        let j = fft::conjugate_index(w, h, i);
        if j > i {
            let d = degrees * (2.0 * rng.random::<f64>() - 1.0);
            phi[i] = d.to_radians();
            phi[j] = -phi[i];
        }
    }
    phi
}

fn phase_noise(img: &RasterImage, degrees: f64, seed: u64) -> RasterImage {
    if degrees == 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let phi = phase_field(w, h, degrees, seed);
    let rot: Vec<Complex<f64>> = phi.iter().map(|&p| Complex::from_polar(1.0, p)).collect();
    let planes = img
        .planes()
        .map(|p| {
            let f: Vec<Complex<f64>> = fft::forward(w, h, p).into_iter().zip(&rot).map(|(f, r)| f * r).collect();
            fft::inverse_real(w, h, f)
        })
        .collect();
    RasterImage::from_planes(w, h, planes)
}

fn power_equalise(img: &RasterImage, spectrum: &AmplitudeSpectrum) -> Result<RasterImage, DistortError> {
    let (w, h) = (img.width(), img.height());
    if (spectrum.width, spectrum.height, spectrum.channels) != (w, h, img.channels()) {
        return Err(DistortError::DimensionMismatch {
            expected: (spectrum.width, spectrum.height, spectrum.channels),
            found: (w, h, img.channels()),
        });
    }
    let planes = img
        .planes()
        .enumerate()
        .map(|(c, p)| {
            let f: Vec<Complex<f64>> = fft::forward(w, h, p)
                .into_iter()
                .zip(spectrum.plane(c))
                .map(|(f, &a)| if f.norm() == 0.0 { Complex::new(a, 0.0) } else { f * (a / f.norm()) })
                .collect();
            fft::inverse_real(w, h, f)
        })
        .collect();
    Ok(RasterImage::from_planes(w, h, planes))
}

/// Counter-clockwise rotation by `quarter_turns * 90` degrees.
pub fn rotate(img: &RasterImage, quarter_turns: usize) -> RasterImage {
    let mut out = img.clone();
    for _ in 0..quarter_turns % 4 {
        out = rotate_ccw(&out);
    }
    out
}

fn rotate_ccw(img: &RasterImage) -> RasterImage {
    let (w, h) = (img.width(), img.height());
    // new image is h wide and w tall; out(x, y) = in(w - 1 - y, x)
    let planes = img
        .planes()
        .map(|p| {
            let mut o = Vec::with_capacity(w * h);
            for y in 0..w {
                for x in 0..h {
                    o.push(p[x * w + (w - 1 - y)]);
                }
            }
            o
        })
        .collect();
    RasterImage::from_planes(h, w, planes)
}
