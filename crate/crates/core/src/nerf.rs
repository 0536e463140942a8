//! NeRF dataset emission: `transforms.json` (Blender layout) and
//! `poses_bounds.npy` (LLFF layout).
//!
//! Both emitters take a parsed sparse model and order frames by image
//! name, matching the frame files the pipeline wrote for the estimator.
//!
//! `transforms.json` carries scene-normalized camera-to-world matrices in
//! the NeRF axis convention (camera x right, y up, z backward) plus the
//! shared horizontal field of view. `poses_bounds.npy` carries one row of
//! 17 doubles per image: a 3x5 block `[R | t | (H, W, fx)]` in the LLFF
//! axis convention (columns down, right, back) followed by near/far depth
//! bounds, in the raw (unnormalized) reconstruction coordinates.

use std::io::{Read, Write};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::colmap::{ImagePose, SparseModel};
use crate::pose::{
    c2w_matrix, compute_bounds, flip_camera_axes, matrix_rows, normalize_scene, PoseError,
    SceneTransform,
};

#[derive(Debug, thiserror::Error)]
pub enum NerfError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json error on {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("cannot emit dataset: {0}")]
    BadModel(String),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error("invalid npy file {path}: {msg}")]
    BadNpy { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NerfError + '_ {
    move |source| NerfError::Io { path: path.to_path_buf(), source }
}

/// One camera in a `transforms.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformFrame {
    pub file_path: String,
    pub transform_matrix: [[f64; 4]; 4],
}

/// The `transforms.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformsDoc {
    pub camera_angle_x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fl_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fl_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<u64>,
    pub frames: Vec<TransformFrame>,
}

#[derive(Debug, Clone)]
pub struct EmitOptions {
    /// Directory holding the frame images the dataset refers to; file paths
    /// in the document are written relative to the document's directory.
    pub frames_dir: PathBuf,
    /// Also emit per-axis focal lengths, principal point, and image size.
    pub include_intrinsics: bool,
}

/// Images sorted by name, with stable intrinsics lookup. The shared camera
/// (for global intrinsics fields) is the one with the lowest camera id.
fn ordered_images(model: &SparseModel) -> Result<Vec<&ImagePose>, NerfError> {
    if model.images.is_empty() {
        return Err(NerfError::BadModel("model registers no images".into()));
    }
    let mut images: Vec<&ImagePose> = model.images.iter().collect();
    images.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(images)
}

/// Writes the Blender-style `transforms.json` for a sparse model and
/// returns the document. Poses are converted to NeRF camera-to-world
/// matrices and jointly normalized (scene centroid at the origin, camera
/// centers within the unit ball); the normalization is also returned.
pub fn emit_transforms_json(
    model: &SparseModel,
    out_path: &Path,
    opts: &EmitOptions,
) -> Result<(TransformsDoc, SceneTransform), NerfError> {
    let images = ordered_images(model)?;
    let camera = &model.cameras[0];
    let camera_angle_x = 2.0 * (camera.width as f64 / (2.0 * camera.fx)).atan();

    let mut raw = Vec::with_capacity(images.len());
    for img in &images {
        raw.push(flip_camera_axes(&c2w_matrix(img)?));
    }
    let (normalized, transform) = normalize_scene(&raw);

    let out_dir = out_path.parent().unwrap_or(Path::new(""));
    let prefix = relative_path(out_dir, &opts.frames_dir);
    let frames = images
        .iter()
        .zip(&normalized)
        .map(|(img, m)| TransformFrame {
            file_path: join_slash(&prefix, &img.name),
            transform_matrix: matrix_rows(m),
        })
        .collect();

    let doc = TransformsDoc {
        camera_angle_x,
        fl_x: opts.include_intrinsics.then_some(camera.fx),
        fl_y: opts.include_intrinsics.then_some(camera.fy),
        cx: opts.include_intrinsics.then_some(camera.cx),
        cy: opts.include_intrinsics.then_some(camera.cy),
        w: opts.include_intrinsics.then_some(camera.width),
        h: opts.include_intrinsics.then_some(camera.height),
        frames,
    };

    if let Some(dir) = out_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err(out_path))?;
        }
    }
    let mut json = serde_json::to_string_pretty(&doc)
        .map_err(|source| NerfError::Json { path: out_path.to_path_buf(), source })?;
    json.push('\n');
    std::fs::write(out_path, json).map_err(io_err(out_path))?;
    Ok((doc, transform))
}

pub fn read_transforms_json(path: &Path) -> Result<TransformsDoc, NerfError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map_err(|source| NerfError::Json { path: path.to_path_buf(), source })
}

/// One `poses_bounds.npy` row: 3x5 pose block row-major, then near, far.
pub type LlffRow = [f64; 17];

/// Writes the LLFF-style `poses_bounds.npy` for a sparse model and returns
/// the rows. Rows are ordered by image name and stay in the raw
/// reconstruction coordinates (no scene normalization).
pub fn emit_poses_bounds(model: &SparseModel, out_path: &Path) -> Result<Vec<LlffRow>, NerfError> {
    let images = ordered_images(model)?;
    let mut rows = Vec::with_capacity(images.len());
    for img in &images {
        let camera = model
            .camera(img.camera_id)
            .ok_or_else(|| NerfError::BadModel(format!("image {} has no camera", img.name)))?;
        let nerf_c2w = flip_camera_axes(&c2w_matrix(img)?);
        let (near, far) = compute_bounds(model, img)?;

        // LLFF axes from NeRF axes: down = -y, right = x, back = z.
        let mut row = [0.0; 17];
        for r in 0..3 {
            row[r * 5] = -nerf_c2w[(r, 1)];
            row[r * 5 + 1] = nerf_c2w[(r, 0)];
            row[r * 5 + 2] = nerf_c2w[(r, 2)];
            row[r * 5 + 3] = nerf_c2w[(r, 3)];
        }
        row[4] = camera.height as f64;
        row[9] = camera.width as f64;
        row[14] = camera.fx;
        row[15] = near;
        row[16] = far;
        rows.push(row);
    }

    if let Some(dir) = out_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err(out_path))?;
        }
    }
    let mut file = std::fs::File::create(out_path).map_err(io_err(out_path))?;
    write_npy_f64_2d(&mut file, &rows).map_err(io_err(out_path))?;
    Ok(rows)
}

/// Serializes rows as an npy v1.0 array of shape (N, 17), dtype `<f8`,
/// C order. The 10-byte preamble plus the header text is padded with
/// spaces to a multiple of 64 bytes and terminated with a newline, so the
/// data section starts 64-byte aligned.
pub(crate) fn write_npy_f64_2d(out: &mut impl Write, rows: &[LlffRow]) -> std::io::Result<()> {
    let dict = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, 17), }}",
        rows.len()
    );
    let unpadded = 10 + dict.len() + 1; // preamble + dict + newline
    let padding = (64 - unpadded % 64) % 64;
    let header_len = dict.len() + padding + 1;
    debug_assert!(header_len <= u16::MAX as usize);

    out.write_all(b"\x93NUMPY\x01\x00")?;
    out.write_all(&(header_len as u16).to_le_bytes())?;
    out.write_all(dict.as_bytes())?;
    out.write_all(&vec![b' '; padding])?;
    out.write_all(b"\n")?;
    for row in rows {
        for v in row {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a `poses_bounds.npy` back, enforcing the exact layout this module
/// writes: npy v1.0, dtype `<f8`, C order, shape (N, 17), aligned header.
pub fn read_poses_bounds(path: &Path) -> Result<Vec<LlffRow>, NerfError> {
    let bad = |msg: &str| NerfError::BadNpy { path: path.to_path_buf(), msg: msg.to_string() };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;

    if bytes.len() < 10 || &bytes[0..6] != b"\x93NUMPY" {
        return Err(bad("missing npy magic"));
    }
    if bytes[6..8] != [1, 0] {
        return Err(bad("unsupported npy version (need 1.0)"));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(bad("header overruns file"));
    }
    if data_start % 64 != 0 {
        return Err(bad("header is not 64-byte aligned"));
    }
    let header = std::str::from_utf8(&bytes[10..data_start])
        .map_err(|_| bad("header is not utf-8"))?;
    if !header.ends_with('\n') {
        return Err(bad("header is not newline-terminated"));
    }
    let dict = header.trim_end_matches('\n').trim_end_matches(' ');
    let shape_re =
        regex::Regex::new(r"^\{'descr': '<f8', 'fortran_order': False, 'shape': \((\d+), 17\), \}$")
            .expect("static regex");
    let caps = shape_re
        .captures(dict)
        .ok_or_else(|| bad(&format!("unexpected header dict {dict:?}")))?;
    let n: usize = caps[1].parse().map_err(|_| bad("row count does not fit usize"))?;

    let data = &bytes[data_start..];
    if data.len() != n * 17 * 8 {
        return Err(bad(&format!(
            "data section is {} bytes, expected {} for {} rows",
            data.len(),
            n * 17 * 8,
            n
        )));
    }
    let mut rows = Vec::with_capacity(n);
    for chunk in data.chunks_exact(17 * 8) {
        let mut row = [0.0; 17];
        for (v, b) in row.iter_mut().zip(chunk.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Relative path from `base` to `target` by component walking (both are
/// used as given; `.` components are ignored). Falls back to `target`
/// itself when the two sides cannot be related (different roots).
pub fn relative_path(base: &Path, target: &Path) -> PathBuf {
    let normalize = |p: &Path| -> Vec<std::ffi::OsString> {
        p.components()
            .filter(|c| !matches!(c, Component::CurDir))
            .map(|c| c.as_os_str().to_os_string())
            .collect()
    };
    let b = normalize(base);
    let t = normalize(target);
    if base.is_absolute() != target.is_absolute() {
        return target.to_path_buf();
    }
    let common = b.iter().zip(&t).take_while(|(x, y)| x == y).count();
    if b[common..].iter().any(|c| c == "..") {
        return target.to_path_buf(); // cannot invert an unresolved parent hop
    }
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for part in &t[common..] {
        out.push(part);
    }
    out
}

/// Joins a relative prefix and an image name with forward slashes.
fn join_slash(prefix: &Path, name: &str) -> String {
    let mut parts: Vec<String> = prefix
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    parts.push(name.to_string());
    parts.join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    // Emitter behavior over synthetic sparse models (normalization, npy
    // grammar, corruption handling) lives in tests/dataset_formats.rs; the
    // helpers here are the pure path utilities.

    #[test]
    fn relative_paths() {
        let rel = |a: &str, b: &str| relative_path(Path::new(a), Path::new(b));
        assert_eq!(rel("/out", "/out/frames"), Path::new("frames"));
        assert_eq!(rel("/out/ds", "/out/frames"), Path::new("../frames"));
        assert_eq!(rel("/out", "/out"), Path::new(""));
        assert_eq!(rel("/a/b", "/c"), Path::new("../../c"));
        assert_eq!(rel("out", "/abs"), Path::new("/abs"), "mixed kinds fall back");
        assert_eq!(rel("./out", "out/frames"), Path::new("frames"), "dot components ignored");
    }

    #[test]
    fn join_slash_uses_forward_separators() {
        assert_eq!(join_slash(Path::new("a/b"), "img.png"), "a/b/img.png");
        assert_eq!(join_slash(Path::new(""), "img.png"), "img.png");
        assert_eq!(join_slash(Path::new(".."), "x.png"), "../x.png");
    }
}
