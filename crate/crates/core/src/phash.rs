//! 64-bit perceptual hash over low-frequency image structure.
//!
//! Construction: grayscale, area-average down to 32x32, 2D DCT-II, keep the
//! top-left 8x8 coefficient block, threshold each coefficient against the
//! median of the block *excluding* the DC term. Bit `j` (row-major over the
//! block, bit 0 the most significant) is set iff its coefficient strictly
//! exceeds the median — ties clear the bit, so a constant nonzero image
//! hashes to exactly `0x8000000000000000` (only DC above the all-zero AC
//! median) and an all-black image to `0` (DC ties the median).
//!
//! Mild recompression and resizing barely move low-frequency DCT signs, so
//! near-duplicates land within a small Hamming distance while unrelated
//! frames disagree on about half the bits.

use crate::frame::{Frame, GrayPlane};

/// 64-bit perceptual hash. Compare with [`hamming`].
pub type PerceptualHash = u64;

const RESIZE: usize = 32;
const BLOCK: usize = 8;

/// Hashes a frame. Total for every frame size >= 1x1.
pub fn phash64(frame: &Frame) -> PerceptualHash {
    phash64_plane(&frame.luma_plane())
}

/// Hash of an already-grayscale plane.
pub fn phash64_plane(plane: &GrayPlane) -> PerceptualHash {
    let small = resize_area(plane, RESIZE, RESIZE);
    let dct = dct2d(&small, RESIZE);
    // Median of the 8x8 low-frequency block, DC excluded: 63 values.
    let mut block = [0.0; BLOCK * BLOCK];
    for v in 0..BLOCK {
        for u in 0..BLOCK {
            block[v * BLOCK + u] = dct[v * RESIZE + u];
        }
    }
    // Coefficients that are zero in exact arithmetic (e.g. every AC term of
    // a constant plane) come out of the float DCT as ~1e-16-relative
    // cancellation residue; the sign comparisons below must not see that
    // noise, so anything that small is snapped to a true zero.
    let scale = block.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    for c in &mut block {
        if c.abs() <= 1e-12 * scale {
            *c = 0.0;
        }
    }
    let mut ac: Vec<f64> = block[1..].to_vec();
    ac.sort_by(f64::total_cmp);
    let median = ac[ac.len() / 2];

    let mut hash = 0u64;
    for (j, &coeff) in block.iter().enumerate() {
        if coeff > median {
            hash |= 1 << (63 - j);
        }
    }
    hash
}

/// Hamming distance between two hashes: the number of differing bits.
pub fn hamming(a: PerceptualHash, b: PerceptualHash) -> u32 {
    (a ^ b).count_ones()
}

/// Area-average (box) resampling to `out_w x out_h`. Each output pixel is
/// the exact area-weighted mean of the source rectangle it covers, which
/// handles both down- and up-scaling of arbitrary dimensions.
fn resize_area(plane: &GrayPlane, out_w: usize, out_h: usize) -> Vec<f64> {
    let (w, h) = (plane.width, plane.height);
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let mut out = Vec::with_capacity(out_w * out_h);
    for j in 0..out_h {
        let y0 = j as f64 * sy;
        let y1 = (j + 1) as f64 * sy;
        for i in 0..out_w {
            let x0 = i as f64 * sx;
            let x1 = (i + 1) as f64 * sx;
            let mut acc = 0.0;
            let mut y = y0.floor() as usize;
            while (y as f64) < y1 && y < h {
                let oy = (y1.min(y as f64 + 1.0) - y0.max(y as f64)).max(0.0);
                let mut x = x0.floor() as usize;
                while (x as f64) < x1 && x < w {
                    let ox = (x1.min(x as f64 + 1.0) - x0.max(x as f64)).max(0.0);
                    acc += plane.at(x, y) * ox * oy;
                    x += 1;
                }
                y += 1;
            }
            out.push(acc / (sx * sy));
        }
    }
    out
}

/// Unnormalized 2D DCT-II of an `n x n` plane, separably (rows, then
/// columns): `C[u] = sum_x f[x] * cos(pi * (2x + 1) * u / (2n))`.
fn dct2d(data: &[f64], n: usize) -> Vec<f64> {
    // cos table: table[u * n + x]
    let mut table = Vec::with_capacity(n * n);
    for u in 0..n {
        for x in 0..n {
            table.push((std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2 * n) as f64).cos());
        }
    }
    let mut rows = vec![0.0; n * n];
    for y in 0..n {
        for u in 0..n {
            let mut acc = 0.0;
            for x in 0..n {
                acc += data[y * n + x] * table[u * n + x];
            }
            rows[y * n + u] = acc;
        }
    }
    let mut out = vec![0.0; n * n];
    for u in 0..n {
        for v in 0..n {
            let mut acc = 0.0;
            for y in 0..n {
                acc += rows[y * n + u] * table[v * n + y];
            }
            out[v * n + u] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameId;
    use std::path::PathBuf;

    fn frame_of(rgb: Vec<u8>, w: u32, h: u32) -> Frame {
        Frame::new(FrameId::new("t", "", 0), w, h, rgb, PathBuf::new())
    }

    #[test]
    fn constant_image_hashes_to_dc_only() {
        for value in [1u8, 128, 255] {
            let f = frame_of(vec![value; 3 * 50 * 40], 50, 40);
            assert_eq!(phash64(&f), 0x8000_0000_0000_0000, "value {value}");
        }
        // All-black: DC is 0 and ties the all-zero AC median, so no bit is
        // set at all.
        let black = frame_of(vec![0; 3 * 50 * 40], 50, 40);
        assert_eq!(phash64(&black), 0);
    }

    #[test]
    fn hash_survives_mild_reencode() {
        for seed in 0..10 {
            let rgb = prep_testkit::texture_rgb(seed, 320, 240);
            let original = phash64(&frame_of(rgb.clone(), 320, 240));
            let reencoded = prep_testkit::jpeg_roundtrip(320, 240, &rgb, 80);
            let perturbed = phash64(&frame_of(reencoded, 320, 240));
            assert!(
                hamming(original, perturbed) <= 10,
                "seed {seed}: drifted {} bits",
                hamming(original, perturbed)
            );
        }
    }

    #[test]
    fn distinct_textures_hash_far_apart() {
        let a = phash64(&frame_of(prep_testkit::texture_rgb(1, 128, 128), 128, 128));
        let b = phash64(&frame_of(prep_testkit::texture_rgb(2, 128, 128), 128, 128));
        assert!(hamming(a, b) > 16, "distance {}", hamming(a, b));
    }

    #[test]
    fn hamming_is_a_metric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let (a, b, c): (u64, u64, u64) = (rng.gen(), rng.gen(), rng.gen());
            assert_eq!(hamming(a, a), 0);
            assert_eq!(hamming(a, b), hamming(b, a));
            assert!(hamming(a, c) <= hamming(a, b) + hamming(b, c));
            assert!(hamming(a, b) <= 64);
        }
    }

    #[test]
    fn area_resize_averages_exactly() {
        // 4x2 -> 2x1: each output pixel averages a 2x2 block.
        let plane = GrayPlane::new(4, 2, vec![0.0, 4.0, 8.0, 12.0, 2.0, 6.0, 10.0, 14.0]);
        let out = resize_area(&plane, 2, 1);
        assert_eq!(out, vec![3.0, 11.0]);
        // Identity resize returns the plane itself.
        let out = resize_area(&plane, 4, 2);
        assert_eq!(out, plane.data);
    }

    #[test]
    fn area_resize_handles_fractional_and_upscale() {
        // 3x1 -> 2x1: left output covers pixels [0, 1.5): (1*a + 0.5*b) / 1.5
        let plane = GrayPlane::new(3, 1, vec![1.0, 2.0, 4.0]);
        let out = resize_area(&plane, 2, 1);
        assert!((out[0] - (1.0 + 0.5 * 2.0) / 1.5).abs() < 1e-12);
        assert!((out[1] - (0.5 * 2.0 + 4.0) / 1.5).abs() < 1e-12);
        // Upscale 1x1 -> 3x3 replicates the single value.
        let plane = GrayPlane::new(1, 1, vec![7.0]);
        let out = resize_area(&plane, 3, 3);
        assert!(out.iter().all(|&v| (v - 7.0).abs() < 1e-12));
    }

    #[test]
    fn dct_impulse_matches_closed_form() {
        // DCT-II of a unit impulse at x0: C[u] = cos(pi (2 x0 + 1) u / 2N).
        let n = 8;
        let x0 = 3;
        let mut data = vec![0.0; n * n];
        data[0 * n + x0] = 1.0; // impulse in row 0
        let dct = dct2d(&data, n);
        for u in 0..n {
            let expected_row = (std::f64::consts::PI * (2 * x0 + 1) as f64 * u as f64
                / (2 * n) as f64)
                .cos();
            for v in 0..n {
                let expected_col = (std::f64::consts::PI * (2 * 0 + 1) as f64 * v as f64
                    / (2 * n) as f64)
                    .cos();
                assert!((dct[v * n + u] - expected_row * expected_col).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tiny_frames_hash_without_panicking() {
        let f = frame_of(vec![9, 200, 31], 1, 1);
        // A 1x1 frame upsamples to a constant 32x32 plane.
        assert_eq!(phash64(&f), 0x8000_0000_0000_0000);
    }
}
