//! Rigid-pose algebra: quaternions to matrices, world/camera inversion,
//! axis-convention changes, scene normalization, and depth bounds.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!
//! * Quaternions are Hamilton `[qw, qx, qy, qz]` and encode world-to-camera
//!   rotation, COLMAP style (camera looks down +z, y points down).
//! * NeRF training code expects camera-to-world matrices with the camera
//!   looking down -z and y up; the switch negates the second and third
//!   rotation columns and is its own inverse.
//! * 4x4 matrices are row-major when serialized.

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::colmap::{ImagePose, Point3D, SparseModel};

#[derive(Debug, thiserror::Error)]
pub enum PoseError {
    #[error("quaternion norm {norm} too far from 1")]
    BadQuaternion { norm: f64 },
    #[error("image {image:?} observes no 3D point at positive depth")]
    DegenerateBounds { image: String },
}

/// Hamilton quaternion `[qw, qx, qy, qz]` to rotation matrix.
///
/// The quaternion is renormalized first; norms further than `1e-3` from 1
/// are rejected as corrupt rather than silently rescaled.
pub fn quat_to_rotmat(q: [f64; 4]) -> Result<Matrix3<f64>, PoseError> {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-3 {
        return Err(PoseError::BadQuaternion { norm });
    }
    let [w, x, y, z] = q.map(|v| v / norm);
    Ok(Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// World-to-camera 4x4 of an image pose.
pub fn w2c_matrix(pose: &ImagePose) -> Result<Matrix4<f64>, PoseError> {
    let r = quat_to_rotmat(pose.quat)?;
    let t = Vector3::from(pose.trans);
    Ok(compose(&r, &t))
}

/// Inverts a rigid transform: `(R, t)` becomes `(R^T, -R^T t)`.
pub fn invert_rigid(m: &Matrix4<f64>) -> Matrix4<f64> {
    let r = m.fixed_view::<3, 3>(0, 0).transpose();
    let t = -r * m.fixed_view::<3, 1>(0, 3);
    compose(&r, &t)
}

/// Camera-to-world matrix of an image pose.
pub fn c2w_matrix(pose: &ImagePose) -> Result<Matrix4<f64>, PoseError> {
    Ok(invert_rigid(&w2c_matrix(pose)?))
}

/// Switches a camera-to-world matrix between the estimator's axes
/// (y down, z forward) and NeRF's (y up, z backward) by negating the
/// second and third columns. Involution: applying it twice is exact
/// identity.
pub fn flip_camera_axes(c2w: &Matrix4<f64>) -> Matrix4<f64> {
    let mut out = *c2w;
    for row in 0..4 {
        out[(row, 1)] = -out[(row, 1)];
        out[(row, 2)] = -out[(row, 2)];
    }
    out
}

/// The similarity applied by [`normalize_scene`]: `x' = scale * (x - translation)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneTransform {
    pub translation: [f64; 3],
    pub scale: f64,
}

/// Recenters camera centers on their centroid and rescales so the farthest
/// camera sits at distance 1 from the origin. Rotations are untouched.
///
/// Degenerate rigs (all cameras at one point) keep scale 1. Applying the
/// normalization to an already-normalized set is an identity up to noise.
pub fn normalize_scene(poses: &[Matrix4<f64>]) -> (Vec<Matrix4<f64>>, SceneTransform) {
    if poses.is_empty() {
        return (vec![], SceneTransform { translation: [0.0; 3], scale: 1.0 });
    }
    let centers: Vec<Vector3<f64>> =
        poses.iter().map(|m| m.fixed_view::<3, 1>(0, 3).into_owned()).collect();
    let centroid = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
    let max_norm =
        centers.iter().map(|c| (c - centroid).norm()).fold(0.0, f64::max);
    let scale = if max_norm < 1e-12 { 1.0 } else { 1.0 / max_norm };
    let out = poses
        .iter()
        .zip(&centers)
        .map(|(m, c)| {
            let mut n = *m;
            n.fixed_view_mut::<3, 1>(0, 3).copy_from(&((c - centroid) * scale));
            n
        })
        .collect();
    (out, SceneTransform { translation: [centroid.x, centroid.y, centroid.z], scale })
}

/// Depth bounds of an image: `0.9 x` the 1st and `1.1 x` the 99th
/// percentile of the camera-frame depths of the 3D points this image
/// observes (positive depths only).
pub fn compute_bounds(model: &SparseModel, pose: &ImagePose) -> Result<(f64, f64), PoseError> {
    let r = quat_to_rotmat(pose.quat)?;
    let t = Vector3::from(pose.trans);
    let mut depths: Vec<f64> = model
        .points3d
        .iter()
        .filter(|p| observes(p, pose.image_id))
        .map(|p| (r * Vector3::from(p.xyz) + t).z)
        .filter(|&z| z > 0.0)
        .collect();
    if depths.is_empty() {
        return Err(PoseError::DegenerateBounds { image: pose.name.clone() });
    }
    depths.sort_by(f64::total_cmp);
    Ok((0.9 * percentile(&depths, 1.0), 1.1 * percentile(&depths, 99.0)))
}

fn observes(point: &Point3D, image_id: u32) -> bool {
    point.track.iter().any(|&(id, _)| id == image_id)
}

/// Linear-interpolation percentile over an ascending-sorted slice:
/// rank `p/100 * (n-1)`, interpolating between the bracketing samples.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn compose(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

/// Row-major nested-array view of a 4x4 matrix, the JSON wire format.
pub fn matrix_rows(m: &Matrix4<f64>) -> [[f64; 4]; 4] {
    let mut rows = [[0.0; 4]; 4];
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    rows
}

/// Inverse of [`matrix_rows`].
pub fn matrix_from_rows(rows: &[[f64; 4]; 4]) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_half_turns() {
        let r = quat_to_rotmat([1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r, Matrix3::identity());
        // Half turn about z: diag(-1, -1, 1).
        let r = quat_to_rotmat([0.0, 0.0, 0.0, 1.0]).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        assert!((r - expected).abs().max() < 1e-15);
    }

    #[test]
    fn rotations_are_orthonormal_with_unit_det() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let q = prep_testkit::random_unit_quat(&mut rng);
            let r = quat_to_rotmat(q).unwrap();
            assert!((r * r.transpose() - Matrix3::identity()).abs().max() < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_far_from_unit() {
        assert!(quat_to_rotmat([2.0, 0.0, 0.0, 0.0]).is_err());
        // Mild drift is renormalized.
        assert!(quat_to_rotmat([1.0005, 0.0, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn w2c_c2w_roundtrip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for i in 0..100 {
            let pose = ImagePose {
                image_id: i,
                quat: prep_testkit::random_unit_quat(&mut rng),
                trans: [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
                camera_id: 1,
                name: String::new(),
            };
            let w2c = w2c_matrix(&pose).unwrap();
            let back = invert_rigid(&invert_rigid(&w2c));
            assert!((w2c - back).abs().max() < 1e-9);
            // Inverse actually inverts.
            assert!((w2c * invert_rigid(&w2c) - Matrix4::identity()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn axis_flip_is_an_exact_involution() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pose = ImagePose {
            image_id: 1,
            quat: prep_testkit::random_unit_quat(&mut rng),
            trans: [rng.gen_range(-2.0..2.0), 0.3, 1.0],
            camera_id: 1,
            name: String::new(),
        };
        let c2w = c2w_matrix(&pose).unwrap();
        let twice = flip_camera_axes(&flip_camera_axes(&c2w));
        assert_eq!(c2w, twice, "sign flips must round-trip bit-exactly");
        // Camera center (column 3) is untouched by the flip.
        assert_eq!(c2w.fixed_view::<3, 1>(0, 3), flip_camera_axes(&c2w).fixed_view::<3, 1>(0, 3));
    }

    #[test]
    fn normalization_centers_and_scales() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let poses: Vec<Matrix4<f64>> = (0..12)
            .map(|_| {
                let r = quat_to_rotmat(prep_testkit::random_unit_quat(&mut rng)).unwrap();
                let t = Vector3::new(
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                );
                compose(&r, &t)
            })
            .collect();
        let (normed, xform) = normalize_scene(&poses);
        let centers: Vec<Vector3<f64>> =
            normed.iter().map(|m| m.fixed_view::<3, 1>(0, 3).into_owned()).collect();
        let centroid = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
        assert!(centroid.norm() < 1e-9);
        let max_norm = centers.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!((max_norm - 1.0).abs() < 1e-12);
        assert!(xform.scale > 0.0);

        // Idempotence: renormalizing changes nothing (up to float noise).
        let (again, xform2) = normalize_scene(&normed);
        for (a, b) in normed.iter().zip(&again) {
            assert!((a - b).abs().max() < 1e-12);
        }
        assert!((xform2.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_rig_keeps_scale_one() {
        let m = Matrix4::identity();
        let (normed, xform) = normalize_scene(&[m, m, m]);
        assert_eq!(xform.scale, 1.0);
        for n in normed {
            assert!(n.fixed_view::<3, 1>(0, 3).norm() < 1e-15);
        }
    }

    #[test]
    fn bounds_match_percentile_oracle() {
        // Single observed point at depth d: every percentile equals d, so
        // near = 0.9 d and far = 1.1 d.
        let model = SparseModel {
            cameras: vec![],
            images: vec![],
            points3d: vec![Point3D {
                point3d_id: 1,
                xyz: [0.0, 0.0, 5.0],
                rgb: [0; 3],
                error: 0.0,
                track: vec![(1, 0)],
            }],
        };
        let pose = ImagePose {
            image_id: 1,
            quat: [1.0, 0.0, 0.0, 0.0],
            trans: [0.0; 3],
            camera_id: 1,
            name: "a".into(),
        };
        let (near, far) = compute_bounds(&model, &pose).unwrap();
        assert!((near - 4.5).abs() < 1e-12);
        assert!((far - 5.5).abs() < 1e-12);
    }

    #[test]
    fn bounds_ignore_points_behind_camera() {
        let mk_point = |id, z| Point3D {
            point3d_id: id,
            xyz: [0.0, 0.0, z],
            rgb: [0; 3],
            error: 0.0,
            track: vec![(1, 0)],
        };
        let pose = ImagePose {
            image_id: 1,
            quat: [1.0, 0.0, 0.0, 0.0],
            trans: [0.0; 3],
            camera_id: 1,
            name: "a".into(),
        };
        let model = SparseModel {
            cameras: vec![],
            images: vec![],
            points3d: vec![mk_point(1, -2.0), mk_point(2, 3.0)],
        };
        let (near, far) = compute_bounds(&model, &pose).unwrap();
        assert!((near - 2.7).abs() < 1e-12);
        assert!((far - 3.3).abs() < 1e-12);

        let all_behind = SparseModel {
            cameras: vec![],
            images: vec![],
            points3d: vec![mk_point(1, -2.0)],
        };
        assert!(compute_bounds(&all_behind, &pose).is_err());
    }

    #[test]
    fn percentile_interpolates_linearly() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 5.0);
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert!((percentile(&v, 25.0) - 2.0).abs() < 1e-12);
        // rank = 0.01 * 4 = 0.04 -> between the first two samples
        assert!((percentile(&v, 1.0) - 1.04).abs() < 1e-12);
    }
}
