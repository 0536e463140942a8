//! 2D discrete Fourier transform over grayscale planes.
//!
//! Transforms are computed at the exact input dimensions — no padding to a
//! power of two — because the sharpness measure in [`crate::blur`] counts
//! spectral coefficients relative to the plane size, and padding would
//! change both the coefficient grid and the counts. The heavy lifting is
//! delegated to `rustfft`, which plans exact-size transforms (mixed-radix
//! with a Bluestein fallback) in double precision.
//!
//! Layout convention: a plane pixel is `plane[y * width + x]` and a
//! spectrum coefficient is `coeffs[v * width + u]`, with
//!
//! ```text
//! F(u, v) = sum_{x, y} plane[x, y] * exp(-2*pi*i*(u*x/W + v*y/H))
//! ```

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::frame::GrayPlane;

/// Frequency-domain image: complex coefficients on the same grid as the
/// input plane, row-major `coeffs[v * width + u]`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    pub coeffs: Vec<Complex<f64>>,
}

impl Spectrum {
    #[inline]
    pub fn at(&self, u: usize, v: usize) -> Complex<f64> {
        self.coeffs[v * self.width + u]
    }
}

/// Forward 2D DFT of a real plane, separably: rows first, then columns.
pub fn fft2d(plane: &GrayPlane) -> Spectrum {
    let (w, h) = (plane.width, plane.height);
    assert!(w > 0 && h > 0, "empty plane");
    let mut coeffs: Vec<Complex<f64>> =
        plane.data.iter().map(|&re| Complex::new(re, 0.0)).collect();
    transform_2d(&mut coeffs, w, h, rustfft::FftDirection::Forward);
    Spectrum { width: w, height: h, coeffs }
}

/// Inverse 2D DFT, normalized by `1 / (W * H)` so that
/// `ifft2d(fft2d(p))` reproduces `p`. Returns the complex spatial plane,
/// row-major `out[y * width + x]`; for spectra of real planes the imaginary
/// parts are numerical noise.
pub fn ifft2d(spectrum: &Spectrum) -> Vec<Complex<f64>> {
    let (w, h) = (spectrum.width, spectrum.height);
    let mut out = spectrum.coeffs.clone();
    transform_2d(&mut out, w, h, rustfft::FftDirection::Inverse);
    let scale = 1.0 / (w as f64 * h as f64);
    for c in &mut out {
        *c *= scale;
    }
    out
}

/// Swaps spectrum quadrants so the DC coefficient lands at
/// `(floor(W/2), floor(H/2))` — the usual centered view for inspecting
/// how much energy sits away from the origin.
pub fn fftshift(spectrum: &Spectrum) -> Spectrum {
    let (w, h) = (spectrum.width, spectrum.height);
    let mut coeffs = vec![Complex::new(0.0, 0.0); w * h];
    for v in 0..h {
        let sv = (v + h / 2) % h;
        for u in 0..w {
            let su = (u + w / 2) % w;
            coeffs[sv * w + su] = spectrum.coeffs[v * w + u];
        }
    }
    Spectrum { width: w, height: h, coeffs }
}

fn transform_2d(
    data: &mut [Complex<f64>],
    w: usize,
    h: usize,
    direction: rustfft::FftDirection,
) {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(w, direction);
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft(h, direction);
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for u in 0..w {
        for v in 0..h {
            column[v] = data[v * w + u];
        }
        col_fft.process(&mut column);
        for v in 0..h {
            data[v * w + u] = column[v];
        }
    }
}
