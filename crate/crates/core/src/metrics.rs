//! Image-quality metrics for before/after comparisons.
//!
//! PSNR is computed over all RGB channels with a peak of 255; identical
//! images report infinity, which serializes as the string `"inf"`. SSIM
//! follows the classic single-scale formulation: luma only, an 11x11
//! Gaussian window with sigma 1.5, stabilizers C1 = (0.01 * 255)^2 and
//! C2 = (0.03 * 255)^2, averaged over fully-valid window positions (no
//! padding), so both inputs must be at least 11 pixels on each side.

use serde::{Deserialize, Serialize};

use crate::frame::{Frame, GrayPlane};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const PEAK: f64 = 255.0;
const C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch { a_width: u32, a_height: u32, b_width: u32, b_height: u32 },
    #[error("image {width}x{height} is smaller than the {min}x{min} SSIM window")]
    TooSmall { width: u32, height: u32, min: u32 },
}

fn check_dims(a: &Frame, b: &Frame) -> Result<(), MetricError> {
    if a.width != b.width || a.height != b.height {
        return Err(MetricError::DimensionMismatch {
            a_width: a.width,
            a_height: a.height,
            b_width: b.width,
            b_height: b.height,
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in decibels over the interleaved RGB bytes.
/// Identical inputs yield `f64::INFINITY`.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let mut sq_sum = 0.0f64;
    for (&pa, &pb) in a.rgb.iter().zip(&b.rgb) {
        let d = pa as f64 - pb as f64;
        sq_sum += d * d;
    }
    let mse = sq_sum / a.rgb.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

/// Mean structural similarity over the luma planes of two same-sized frames.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    if (a.width as usize) < SSIM_WINDOW || (a.height as usize) < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            width: a.width,
            height: a.height,
            min: SSIM_WINDOW as u32,
        });
    }
    Ok(ssim_planes(&a.luma_plane(), &b.luma_plane()))
}

/// Normalized 1D Gaussian tap weights; the 2D window is their outer
/// product, so its total weight is exactly the product of two unit sums.
fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, tap) in k.iter_mut().enumerate() {
        let d = i as f64 - center;
        *tap = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *tap;
    }
    for tap in &mut k {
        *tap /= sum;
    }
    k
}

/// Valid-mode separable filtering: rows then columns, output shrinks by
/// `SSIM_WINDOW - 1` in each dimension.
fn filter_valid(data: &[f64], width: usize, height: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - (SSIM_WINDOW - 1);
    let oh = height - (SSIM_WINDOW - 1);
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &tap) in kernel.iter().enumerate() {
                acc += data[y * width + x + k] * tap;
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &tap) in kernel.iter().enumerate() {
                acc += rows[(y + k) * ow + x] * tap;
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

fn ssim_planes(x: &GrayPlane, y: &GrayPlane) -> f64 {
    let (w, h) = (x.width, x.height);
    let kernel = gaussian_kernel();
    let xx: Vec<f64> = x.data.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.data.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.data.iter().zip(&y.data).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(&x.data, w, h, &kernel);
    let mu_y = filter_valid(&y.data, w, h, &kernel);
    let e_xx = filter_valid(&xx, w, h, &kernel);
    let e_yy = filter_valid(&yy, w, h, &kernel);
    let e_xy = filter_valid(&xy, w, h, &kernel);

    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + C1) * (2.0 * cov + C2);
        let den = (mx * mx + my * my + C1) * (var_x + var_y + C2);
        total += num / den;
    }
    total / mu_x.len() as f64
}

/// Comparison summary for a pair of images, JSON-friendly (infinite PSNR
/// round-trips as the string `"inf"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub a: String,
    pub b: String,
    #[serde(with = "psnr_db")]
    pub psnr_db: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn new(a: impl Into<String>, b: impl Into<String>, psnr_db: f64, ssim: f64) -> Self {
        Self { a: a.into(), b: b.into(), psnr_db, ssim }
    }
}

mod psnr_db {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if value.is_infinite() {
            ser.serialize_str("inf")
        } else {
            ser.serialize_f64(*value)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("invalid psnr value {s:?}"))),
        }
    }
}
