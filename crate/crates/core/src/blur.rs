//! Frequency-domain sharpness scoring and the blur-removal stage.
//!
//! Defocused frames poison sparse reconstruction, so the pipeline scores
//! every sampled frame and drops the ones below a configured threshold
//! `h_b` before pose estimation ever sees them.
//!
//! The primary score is the spectral population measure `FM`: the fraction
//! of DFT coefficients whose magnitude exceeds one thousandth of the
//! spectral peak. Sharp imagery spreads energy across the grid and scores
//! near 1; heavy blur concentrates energy near DC and scores near 0. A
//! Laplacian-variance score is carried alongside purely as a diagnostic —
//! it never gates a frame.

use serde::{Deserialize, Serialize};

use crate::fft::{fft2d, fftshift};
use crate::frame::{FrameSet, GrayPlane, Provenance};

/// Fraction of spectral coefficients above `max|F| / 1000`.
///
/// Returns a value in `[0, 1]`; an all-zero plane scores 0. The score is
/// invariant under positive rescaling of the plane (threshold and
/// magnitudes scale together) and is independent of where detail sits in
/// the frame.
pub fn sharpness_fm(plane: &GrayPlane) -> f64 {
    let spectrum = fftshift(&fft2d(plane));
    let mags: Vec<f64> = spectrum.coeffs.iter().map(|c| c.norm()).collect();
    let peak = mags.iter().copied().fold(0.0_f64, f64::max);
    if peak == 0.0 {
        return 0.0; // all-zero plane: no content, defined as fully blurred
    }
    let tau = peak / 1000.0;
    let above = mags.iter().filter(|&&m| m > tau).count();
    above as f64 / (plane.width as f64 * plane.height as f64)
}

#[derive(Debug, thiserror::Error)]
pub enum BlurError {
    #[error("plane {width}x{height} too small for a 3x3 Laplacian")]
    PlaneTooSmall { width: usize, height: usize },
}

/// Population variance of the 3x3 Laplacian response over the interior of
/// the plane (kernel `[[0,1,0],[1,-4,1],[0,1,0]]`, no padding).
///
/// Errors if the plane has no interior, i.e. is smaller than 3x3.
pub fn laplacian_variance(plane: &GrayPlane) -> Result<f64, BlurError> {
    let (w, h) = (plane.width, plane.height);
    if w < 3 || h < 3 {
        return Err(BlurError::PlaneTooSmall { width: w, height: h });
    }
    let mut responses = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let r = plane.at(x, y - 1) + plane.at(x - 1, y) + plane.at(x + 1, y)
                + plane.at(x, y + 1)
                - 4.0 * plane.at(x, y);
            responses.push(r);
        }
    }
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    let var = responses.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(var)
}

/// Scores and threshold decision for one frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub frame: crate::frame::FrameId,
    pub fm_score: f64,
    /// Advisory only; never part of the keep/remove decision.
    pub lap_var: f64,
    /// `true` means the frame is kept (`fm_score > h_b`).
    pub keep: bool,
    pub h_b: f64,
}

/// Scores a frame and applies the removal rule: remove iff `FM <= h_b`.
pub fn classify_blur(plane: &GrayPlane, frame: crate::frame::FrameId, h_b: f64) -> SharpnessReport {
    let fm_score = sharpness_fm(plane);
    let lap_var = laplacian_variance(plane).unwrap_or(0.0);
    SharpnessReport { frame, fm_score, lap_var, keep: fm_score > h_b, h_b }
}

/// Removes frames with `FM <= h_b` from a sampled set.
///
/// Returns the surviving set (provenance `Deblurred`, original order) and a
/// report for every input frame.
pub fn filter_blurred(frames: &FrameSet, h_b: f64) -> (FrameSet, Vec<SharpnessReport>) {
    debug_assert_eq!(frames.provenance(), Provenance::Sampled, "blur filter runs on sampled frames");
    let reports: Vec<SharpnessReport> = frames
        .iter()
        .map(|f| classify_blur(&f.luma_plane(), f.id.clone(), h_b))
        .collect();
    let mut keep = reports.iter().map(|r| r.keep);
    let survivors = frames.retain(Provenance::Deblurred, |_| keep.next().unwrap());
    (survivors, reports)
}
