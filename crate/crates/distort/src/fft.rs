use rustfft::num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

/// In-place unnormalised 2D DFT of a row-major `width x height` buffer.
pub(crate) fn fft2(width: usize, height: usize, buf: &mut [Complex<f64>], direction: FftDirection) {
    let mut planner = FftPlanner::new();
    let rows = planner.plan_fft(width, direction);
    for row in buf.chunks_exact_mut(width) {
        rows.process(row);
    }
    let cols = planner.plan_fft(height, direction);
    let mut col = vec![Complex::default(); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = buf[y * width + x];
        }
        cols.process(&mut col);
        for y in 0..height {
            buf[y * width + x] = col[y];
        }
    }
}

pub(crate) fn forward(width: usize, height: usize, plane: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2(width, height, &mut buf, FftDirection::Forward);
    buf
}

/// Inverse transform, normalised, keeping the real part.
pub(crate) fn inverse_real(width: usize, height: usize, mut spectrum: Vec<Complex<f64>>) -> Vec<f64> {
    fft2(width, height, &mut spectrum, FftDirection::Inverse);
    let n = (width * height) as f64;
    spectrum.into_iter().map(|c| c.re / n).collect()
}

/// Index of the frequency conjugate to `(x, y)`.
pub(crate) fn conjugate_index(width: usize, height: usize, i: usize) -> usize {
    let (x, y) = (i % width, i / width);
    ((height - y) % height) * width + (width - x) % width
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_conjugates() {
        let (w, h) = (6, 5);
        let plane: Vec<f64> = (0..w * h).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let f = forward(w, h, &plane);
        for i in 0..w * h {
            let j = conjugate_index(w, h, i);
            assert_eq!(conjugate_index(w, h, j), i);
            assert!((f[i] - f[j].conj()).norm() < 1e-9);
        }
        let back = inverse_real(w, h, f);
        for (a, b) in plane.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
