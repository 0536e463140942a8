//! Deterministic synthetic fixtures for exercising the `prep` pipeline.
//!
//! Everything here is seeded: the same inputs always produce byte-identical
//! images and models, so tests can freeze expectations. The centerpiece is
//! [`build_reduction_corpus`], which lays down an image directory with a
//! known ground truth — which frames are blurred, which are near-duplicates
//! of which — and calibrates a blur threshold that cleanly separates the
//! two populations it injected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use prep_core::colmap::{CameraIntrinsics, CameraModel, ImagePose, Point3D, SparseModel};
use prep_core::frame::{Frame, FrameId, FrameRef, GrayPlane};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn derive(base: u64, a: u64, b: u64) -> u64 {
    base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

// ---------------------------------------------------------------------------
// Synthetic imagery
// ---------------------------------------------------------------------------

/// A reproducible "natural texture": a stack of random plane waves in three
/// frequency bands plus broadband noise.
///
/// The banding is deliberate. Low frequencies make textures perceptually
/// distinct from one another (they dominate perceptual hashes), while the
/// mid and high bands give Gaussian blur something to destroy at each of
/// sigma 1, 2, and 3, so sharpness scores drop strictly with blur radius.
pub fn texture_plane(seed: u64, width: usize, height: usize) -> GrayPlane {
    let mut rng = rng_for(seed);
    // (band frequency range, amplitude range, wave count)
    let bands = [((0.02, 0.08), (12.0, 22.0), 4), ((0.10, 0.20), (8.0, 16.0), 4), ((0.25, 0.45), (6.0, 12.0), 4)];
    let mut waves = Vec::new();
    for ((fmin, fmax), (amin, amax), count) in bands {
        for _ in 0..count {
            let r = rng.gen_range(fmin..fmax);
            let theta = rng.gen_range(0.0..std::f64::consts::PI);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp = rng.gen_range(amin..amax);
            waves.push((r * theta.cos(), r * theta.sin(), phase, amp));
        }
    }
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let mut v = 128.0;
            for &(fx, fy, phase, amp) in &waves {
                v += amp * (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) + phase).cos();
            }
            v += rng.gen_range(-12.0..12.0);
            data.push(v.clamp(0.0, 255.0));
        }
    }
    GrayPlane::new(width, height, data)
}

/// RGB texture: a shared luma structure with small per-channel low-frequency
/// tints, so color conversion paths see three genuinely different channels.
pub fn texture_rgb(seed: u64, width: usize, height: usize) -> Vec<u8> {
    let base = texture_plane(seed, width, height);
    let mut rng = rng_for(derive(seed, 0xC01, 0));
    let mut tints = [[0.0; 3]; 3]; // per channel: fx, fy, amp
    for t in &mut tints {
        *t = [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(5.0..12.0)];
    }
    let mut rgb = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let v = base.at(x, y);
            for [fx, fy, amp] in tints {
                let tint = amp * (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64)).sin();
                rgb.push((v + tint).clamp(0.0, 255.0).round() as u8);
            }
        }
    }
    rgb
}

/// Uniform white noise, one independent byte per channel.
pub fn noise_rgb(seed: u64, width: usize, height: usize) -> Vec<u8> {
    let mut rng = rng_for(seed);
    (0..width * height * 3).map(|_| rng.gen()).collect()
}

/// Separable Gaussian blur with clamp-to-edge borders; kernel radius
/// `ceil(3 sigma)`.
pub fn gaussian_blur(plane: &GrayPlane, sigma: f64) -> GrayPlane {
    assert!(sigma > 0.0);
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for i in -radius..=radius {
        kernel.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }
    let (w, h) = (plane.width, plane.height);
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    // Horizontal pass, then vertical.
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sx = clamp(x as isize + ki as isize - radius, w);
                acc += k * plane.at(sx, y);
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sy = clamp(y as isize + ki as isize - radius, h);
                acc += k * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    GrayPlane::new(w, h, out)
}

/// Gaussian blur applied independently to each RGB channel.
pub fn gaussian_blur_rgb(width: usize, height: usize, rgb: &[u8], sigma: f64) -> Vec<u8> {
    let mut out = vec![0u8; rgb.len()];
    for ch in 0..3 {
        let plane = GrayPlane::new(
            width,
            height,
            rgb.chunks_exact(3).map(|px| px[ch] as f64).collect(),
        );
        let blurred = gaussian_blur(&plane, sigma);
        for (i, v) in blurred.data.iter().enumerate() {
            out[i * 3 + ch] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// JPEG encode at the given quality and decode back — the "mild re-encode"
/// perturbation used for near-duplicate fixtures.
pub fn jpeg_roundtrip(width: u32, height: u32, rgb: &[u8], quality: u8) -> Vec<u8> {
    let bytes = jpeg_bytes(width, height, rgb, quality);
    let img = image::load_from_memory(&bytes).expect("decode jpeg");
    img.to_rgb8().into_raw()
}

/// In-memory JPEG encoding of a raw RGB buffer.
pub fn jpeg_bytes(width: u32, height: u32, rgb: &[u8], quality: u8) -> Vec<u8> {
    use image::codecs::jpeg::JpegEncoder;
    use image::ImageEncoder;
    let mut bytes = Vec::new();
    JpegEncoder::new_with_quality(&mut bytes, quality)
        .write_image(rgb, width, height, image::ExtendedColorType::Rgb8)
        .expect("encode jpeg");
    bytes
}

/// Writes a raw RGB buffer as PNG.
pub fn write_png(path: &Path, width: u32, height: u32, rgb: &[u8]) {
    let img = image::RgbImage::from_raw(width, height, rgb.to_vec()).expect("buffer size");
    img.save(path).expect("write png");
}

/// Convenience constructor for an in-memory frame.
pub fn frame(id: FrameId, width: u32, height: u32, rgb: Vec<u8>) -> FrameRef {
    Arc::new(Frame::new(id, width, height, rgb, PathBuf::new()))
}

// ---------------------------------------------------------------------------
// Reduction corpus: ground-truth blur + near-duplicate injection
// ---------------------------------------------------------------------------

/// Ground truth for a generated frame directory.
pub struct ReductionCorpus {
    /// Frames that must survive the whole reduction.
    pub sharp: Vec<FrameId>,
    /// Blurred injections the blur stage must remove.
    pub blurred: Vec<FrameId>,
    /// Near-duplicate injections the dedup stage must remove, paired with
    /// the id of the original they duplicate.
    pub dups: Vec<(FrameId, FrameId)>,
    /// Blur threshold calibrated to the midpoint of the measured gap.
    pub h_b: f64,
    /// Hamming radius the duplicates were verified against.
    pub h_s: u32,
}

/// Builds a frame directory with `n_sharp` distinct textures (camera `A`),
/// `n_blurred` sigma-3 blurred textures appended to camera `A`, and
/// `n_dups` JPEG re-encodes of the first sharp frames under camera `Z`.
///
/// Ground truth is *verified at generation time*: base textures are
/// rejection-sampled until their perceptual hashes sit at least `2*h_s + 1`
/// apart (so no accidental cluster can form and every duplicate is within
/// `h_s` of exactly its own original), each re-encode is checked to land
/// within `h_s` of its base, and the returned `h_b` is the midpoint of a
/// verified-positive gap between the blurred and sharp score populations.
pub fn build_reduction_corpus(
    dir: &Path,
    width: u32,
    height: u32,
    seed: u64,
    n_sharp: usize,
    n_blurred: usize,
    n_dups: usize,
) -> ReductionCorpus {
    assert!(n_dups <= n_sharp);
    let h_s: u32 = 10;
    std::fs::create_dir_all(dir).expect("create corpus dir");
    let (w, h) = (width as usize, height as usize);

    // Distinct textures, separated in hash space by at least 2*h_s + 1.
    let n_textures = n_sharp + n_blurred;
    let mut textures: Vec<Vec<u8>> = Vec::with_capacity(n_textures);
    let mut hashes: Vec<prep_core::PerceptualHash> = Vec::new();
    for i in 0..n_textures {
        let mut accepted = None;
        for attempt in 0..64u64 {
            let rgb = texture_rgb(derive(seed, i as u64, attempt), w, h);
            let hash = hash_of(&rgb, width, height);
            if hashes.iter().all(|prev| prep_core::hamming(*prev, hash) >= 2 * h_s + 1) {
                hashes.push(hash);
                accepted = Some(rgb);
                break;
            }
        }
        textures.push(accepted.expect("texture separation unattainable"));
    }

    let id = |cam: &str, idx: u32| FrameId::new(cam, "", idx);
    let mut sharp = Vec::new();
    let mut blurred = Vec::new();
    let mut dups = Vec::new();
    let mut sharp_fms: Vec<f64> = Vec::new();
    let mut blurred_fms: Vec<f64> = Vec::new();

    let fm_of = |rgb: &[u8]| {
        let f = Frame::new(id("t", 0), width, height, rgb.to_vec(), PathBuf::new());
        prep_core::sharpness_fm(&f.luma_plane())
    };

    for (i, tex) in textures.iter().take(n_sharp).enumerate() {
        let fid = id("A", i as u32);
        write_png(&dir.join(format!("A_{i:04}.png")), width, height, tex);
        sharp_fms.push(fm_of(tex));
        sharp.push(fid);
    }
    for (j, tex) in textures.iter().skip(n_sharp).enumerate() {
        let idx = (n_sharp + j) as u32;
        let soft = gaussian_blur_rgb(w, h, tex, 3.0);
        write_png(&dir.join(format!("A_{idx:04}.png")), width, height, &soft);
        blurred_fms.push(fm_of(&soft));
        blurred.push(id("A", idx));
    }
    for i in 0..n_dups {
        let bytes = jpeg_bytes(width, height, &textures[i], 80);
        std::fs::write(dir.join(format!("Z_{i:04}.jpg")), &bytes).expect("write jpeg");
        // Measure exactly what the pipeline will decode.
        let decoded = image::load_from_memory(&bytes).expect("decode").to_rgb8().into_raw();
        let d = prep_core::hamming(hash_of(&decoded, width, height), hashes[i]);
        assert!(d <= h_s, "re-encode drifted {d} > {h_s} bits from its original");
        sharp_fms.push(fm_of(&decoded));
        dups.push((id("Z", i as u32), id("A", i as u32)));
    }

    let min_sharp = sharp_fms.iter().copied().fold(f64::INFINITY, f64::min);
    let max_blurred = blurred_fms.iter().copied().fold(0.0, f64::max);
    assert!(
        max_blurred < min_sharp,
        "no score gap: blurred up to {max_blurred}, sharp down to {min_sharp}"
    );
    ReductionCorpus { sharp, blurred, dups, h_b: 0.5 * (max_blurred + min_sharp), h_s }
}

fn hash_of(rgb: &[u8], width: u32, height: u32) -> prep_core::PerceptualHash {
    let f = Frame::new(FrameId::new("t", "", 0), width, height, rgb.to_vec(), PathBuf::new());
    prep_core::phash64(&f)
}

// ---------------------------------------------------------------------------
// Synthetic sparse models
// ---------------------------------------------------------------------------

/// A geometrically coherent sparse model: cameras on a ring looking at the
/// origin, a shared pinhole camera, and a point cloud near the origin that
/// every image observes, so depth bounds are well defined for all views.
///
/// `images` is a list of (file name, width, height); all dimensions must
/// match. Deterministic in `seed`.
pub fn ring_model(images: &[(String, u32, u32)], seed: u64) -> SparseModel {
    assert!(!images.is_empty());
    let (w, h) = (images[0].1, images[0].2);
    assert!(images.iter().all(|&(_, iw, ih)| iw == w && ih == h), "mixed dimensions");
    let mut rng = rng_for(seed);

    let fx = 0.75 * w as f64;
    let camera = CameraIntrinsics {
        camera_id: 1,
        model: CameraModel::Pinhole,
        width: w as u64,
        height: h as u64,
        fx,
        fy: fx,
        cx: w as f64 / 2.0,
        cy: h as f64 / 2.0,
        distortion: vec![],
    };

    let n_points = 200;
    let points_xyz: Vec<Vector3<f64>> = (0..n_points)
        .map(|_| {
            Vector3::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8))
        })
        .collect();

    let mut names: Vec<&String> = images.iter().map(|(n, _, _)| n).collect();
    names.sort();
    let mut model_images = Vec::new();
    let mut tracks: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n_points];
    for (i, name) in names.iter().enumerate() {
        let image_id = (i + 1) as u32;
        let angle = std::f64::consts::TAU * i as f64 / names.len() as f64;
        let center = Vector3::new(3.0 * angle.cos(), 3.0 * angle.sin(), 1.5);
        let forward = (-center).normalize();
        let up = Vector3::new(0.0, 0.0, 1.0);
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rot = nalgebra::Matrix3::from_rows(&[
            right.transpose(),
            down.transpose(),
            forward.transpose(),
        ]);
        let t = -rot * center;
        let q = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(rot));
        let (qw, qx, qy, qz) = (q.w, q.i, q.j, q.k);
        // COLMAP stores qw first; keep the scalar part positive for tidiness.
        let quat = if qw < 0.0 { [-qw, -qx, -qy, -qz] } else { [qw, qx, qy, qz] };

        for (pi, track) in tracks.iter_mut().enumerate() {
            track.push((image_id, pi as u32));
        }
        model_images.push(ImagePose {
            image_id,
            quat,
            trans: [t.x, t.y, t.z],
            camera_id: 1,
            name: (*name).clone(),
        });
    }

    let points3d = points_xyz
        .iter()
        .enumerate()
        .map(|(pi, p)| Point3D {
            point3d_id: pi as u64 + 1,
            xyz: [p.x, p.y, p.z],
            rgb: [rng.gen(), rng.gen(), rng.gen()],
            error: rng.gen_range(0.3..1.5),
            track: tracks[pi].clone(),
        })
        .collect();

    SparseModel { cameras: vec![camera], images: model_images, points3d }
}

/// A randomized model touching every supported camera model, for format
/// round-trip tests. Not geometrically meaningful.
pub fn random_sparse_model(seed: u64) -> SparseModel {
    let mut rng = rng_for(seed);
    let mut cameras = Vec::new();
    for (i, model) in [
        CameraModel::SimplePinhole,
        CameraModel::Pinhole,
        CameraModel::SimpleRadial,
        CameraModel::Opencv,
    ]
    .into_iter()
    .enumerate()
    {
        let w = rng.gen_range(100u64..2000);
        let h = rng.gen_range(100u64..2000);
        let fx = rng.gen_range(50.0..1500.0);
        let fy = match model {
            CameraModel::SimplePinhole | CameraModel::SimpleRadial => fx,
            _ => rng.gen_range(50.0..1500.0),
        };
        let distortion = match model {
            CameraModel::SimpleRadial => vec![rng.gen_range(-0.1..0.1)],
            CameraModel::Opencv => (0..4).map(|_| rng.gen_range(-0.1..0.1)).collect(),
            _ => vec![],
        };
        cameras.push(CameraIntrinsics {
            camera_id: i as u32 + 1,
            model,
            width: w,
            height: h,
            fx,
            fy,
            cx: rng.gen_range(0.3..0.7) * w as f64,
            cy: rng.gen_range(0.3..0.7) * h as f64,
            distortion,
        });
    }

    let n_images = 10;
    let images: Vec<ImagePose> = (0..n_images)
        .map(|i| ImagePose {
            image_id: i + 1,
            quat: random_unit_quat(&mut rng),
            trans: [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
            camera_id: (i % 4) + 1,
            name: format!("view_{i:03}.png"),
        })
        .collect();

    let points3d = (0..50u64)
        .map(|pi| {
            let len = rng.gen_range(1..5);
            let track = (0..len)
                .map(|_| (rng.gen_range(1..=n_images), rng.gen_range(0..100u32)))
                .collect();
            Point3D {
                point3d_id: pi + 1,
                xyz: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
                rgb: [rng.gen(), rng.gen(), rng.gen()],
                error: rng.gen_range(0.0..2.0),
                track,
            }
        })
        .collect();

    SparseModel { cameras, images, points3d }
}

/// Quasi-uniform random unit quaternion as `[w, x, y, z]`.
pub fn random_unit_quat(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
        }
    }
}
