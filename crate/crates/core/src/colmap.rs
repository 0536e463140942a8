//! Sparse-model I/O for COLMAP-compatible pose estimators.
//!
//! A model directory holds three files — `cameras`, `images`, `points3D` —
//! in either the text (`.txt`) or binary (`.bin`) encoding. Both encodings
//! carry the same data and parse into the same [`SparseModel`]; which one a
//! directory uses is auto-detected by [`parse_model_dir`].
//!
//! Per-image 2D keypoint observations are consumed but not retained: the
//! downstream conversions need camera intrinsics, poses, and 3D point
//! tracks only. Writers emit empty 2D observation lists for the same
//! reason.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! cameras.bin:  u64 count, then per camera:
//!               u32 camera_id, i32 model_id, u64 width, u64 height,
//!               f64 params[n]            (n fixed by the model)
//! images.bin:   u64 count, then per image:
//!               u32 image_id, f64 qw qx qy qz, f64 tx ty tz,
//!               u32 camera_id, null-terminated name,
//!               u64 n_points2d, then n_points2d x (f64 x, f64 y, u64 point3d_id)
//! points3D.bin: u64 count, then per point:
//!               u64 point3d_id, f64 x y z, u8 r g b, f64 error,
//!               u64 track_len, then track_len x (u32 image_id, u32 point2d_idx)
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ColmapError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("{file} at byte {offset}: {msg}")]
    Binary { file: String, offset: usize, msg: String },
    #[error("unsupported camera model {model} in {file}")]
    UnsupportedModel { file: String, model: String },
    #[error("model integrity: {0}")]
    Integrity(String),
    #[error("no sparse model found in {0} (neither cameras.bin nor cameras.txt)")]
    NoModel(String),
}

/// The camera models the converter understands. Anything else is rejected
/// up front rather than silently mis-projected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
    SimpleRadial,
    Opencv,
}

impl CameraModel {
    pub fn from_id(id: i32) -> Option<Self> {
        match id {
            0 => Some(Self::SimplePinhole),
            1 => Some(Self::Pinhole),
            2 => Some(Self::SimpleRadial),
            4 => Some(Self::Opencv),
            _ => None,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "SIMPLE_PINHOLE" => Some(Self::SimplePinhole),
            "PINHOLE" => Some(Self::Pinhole),
            "SIMPLE_RADIAL" => Some(Self::SimpleRadial),
            "OPENCV" => Some(Self::Opencv),
            _ => None,
        }
    }

    pub fn id(self) -> i32 {
        match self {
            Self::SimplePinhole => 0,
            Self::Pinhole => 1,
            Self::SimpleRadial => 2,
            Self::Opencv => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SimplePinhole => "SIMPLE_PINHOLE",
            Self::Pinhole => "PINHOLE",
            Self::SimpleRadial => "SIMPLE_RADIAL",
            Self::Opencv => "OPENCV",
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            Self::SimplePinhole => 3,
            Self::Pinhole => 4,
            Self::SimpleRadial => 4,
            Self::Opencv => 8,
        }
    }
}

/// One calibrated camera. Focal lengths and principal point are extracted
/// from the model's parameter vector; remaining parameters are kept as
/// distortion coefficients in model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub camera_id: u32,
    pub model: CameraModel,
    pub width: u64,
    pub height: u64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub distortion: Vec<f64>,
}

impl CameraIntrinsics {
    fn from_params(
        camera_id: u32,
        model: CameraModel,
        width: u64,
        height: u64,
        params: &[f64],
    ) -> Result<Self, String> {
        if params.len() != model.param_count() {
            return Err(format!(
                "camera {camera_id}: model {} expects {} params, got {}",
                model.name(),
                model.param_count(),
                params.len()
            ));
        }
        let (fx, fy, cx, cy, distortion) = match model {
            CameraModel::SimplePinhole => (params[0], params[0], params[1], params[2], vec![]),
            CameraModel::Pinhole => (params[0], params[1], params[2], params[3], vec![]),
            CameraModel::SimpleRadial => {
                (params[0], params[0], params[1], params[2], vec![params[3]])
            }
            CameraModel::Opencv => {
                (params[0], params[1], params[2], params[3], params[4..8].to_vec())
            }
        };
        Ok(Self { camera_id, model, width, height, fx, fy, cx, cy, distortion })
    }

    /// Parameter vector in the model's canonical order.
    pub fn params(&self) -> Vec<f64> {
        let mut p = match self.model {
            CameraModel::SimplePinhole => vec![self.fx, self.cx, self.cy],
            CameraModel::Pinhole => vec![self.fx, self.fy, self.cx, self.cy],
            CameraModel::SimpleRadial => vec![self.fx, self.cx, self.cy],
            CameraModel::Opencv => vec![self.fx, self.fy, self.cx, self.cy],
        };
        p.extend_from_slice(&self.distortion);
        p
    }
}

/// One registered image: world-to-camera rotation (Hamilton quaternion,
/// scalar first) and translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePose {
    pub image_id: u32,
    /// `[qw, qx, qy, qz]`, unit norm.
    pub quat: [f64; 4],
    /// `[tx, ty, tz]`; the camera center is `-R^T t`.
    pub trans: [f64; 3],
    pub camera_id: u32,
    pub name: String,
}

/// One triangulated point with its observation track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point3D {
    pub point3d_id: u64,
    pub xyz: [f64; 3],
    pub rgb: [u8; 3],
    pub error: f64,
    /// `(image_id, point2d_idx)` pairs.
    pub track: Vec<(u32, u32)>,
}

/// A parsed sparse reconstruction, sorted by id on every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseModel {
    pub cameras: Vec<CameraIntrinsics>,
    pub images: Vec<ImagePose>,
    pub points3d: Vec<Point3D>,
}

impl SparseModel {
    pub fn camera(&self, camera_id: u32) -> Option<&CameraIntrinsics> {
        self.cameras.iter().find(|c| c.camera_id == camera_id)
    }

    /// Sorts by id and checks referential and numeric integrity.
    pub fn finalize(mut self) -> Result<Self, ColmapError> {
        self.cameras.sort_by_key(|c| c.camera_id);
        self.images.sort_by_key(|i| i.image_id);
        self.points3d.sort_by_key(|p| p.point3d_id);

        let fail = |msg: String| Err(ColmapError::Integrity(msg));
        for w in self.cameras.windows(2) {
            if w[0].camera_id == w[1].camera_id {
                return fail(format!("duplicate camera id {}", w[0].camera_id));
            }
        }
        for c in &self.cameras {
            if c.width == 0 || c.height == 0 {
                return fail(format!("camera {}: zero dimensions", c.camera_id));
            }
            if !(c.fx > 0.0 && c.fy > 0.0) {
                return fail(format!("camera {}: non-positive focal length", c.camera_id));
            }
            if !(c.cx > 0.0 && c.cx < c.width as f64 && c.cy > 0.0 && c.cy < c.height as f64) {
                return fail(format!("camera {}: principal point outside image", c.camera_id));
            }
        }
        let camera_ids: HashSet<u32> = self.cameras.iter().map(|c| c.camera_id).collect();
        let mut names = HashSet::new();
        for w in self.images.windows(2) {
            if w[0].image_id == w[1].image_id {
                return fail(format!("duplicate image id {}", w[0].image_id));
            }
        }
        for img in &self.images {
            if !camera_ids.contains(&img.camera_id) {
                return fail(format!(
                    "image {} references missing camera {}",
                    img.image_id, img.camera_id
                ));
            }
            if img.name.is_empty() {
                return fail(format!("image {} has an empty name", img.image_id));
            }
            if !names.insert(img.name.as_str()) {
                return fail(format!("duplicate image name {:?}", img.name));
            }
            let norm = img.quat.iter().map(|q| q * q).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return fail(format!("image {}: non-unit quaternion (norm {norm})", img.image_id));
            }
        }
        let image_ids: HashSet<u32> = self.images.iter().map(|i| i.image_id).collect();
        for w in self.points3d.windows(2) {
            if w[0].point3d_id == w[1].point3d_id {
                return fail(format!("duplicate point id {}", w[0].point3d_id));
            }
        }
        for p in &self.points3d {
            for &(image_id, _) in &p.track {
                if !image_ids.contains(&image_id) {
                    return fail(format!(
                        "point {} track references missing image {image_id}",
                        p.point3d_id
                    ));
                }
            }
        }
        Ok(self)
    }
}

/// Parses a model directory, preferring the binary encoding when both are
/// present.
pub fn parse_model_dir(dir: &Path) -> Result<SparseModel, ColmapError> {
    if dir.join("cameras.bin").exists() {
        parse_binary_model(dir)
    } else if dir.join("cameras.txt").exists() {
        parse_text_model(dir)
    } else {
        Err(ColmapError::NoModel(dir.display().to_string()))
    }
}

// ---------------------------------------------------------------------------
// Text encoding
// ---------------------------------------------------------------------------

pub fn parse_text_model(dir: &Path) -> Result<SparseModel, ColmapError> {
    let cameras = parse_cameras_text(&dir.join("cameras.txt"))?;
    let images = parse_images_text(&dir.join("images.txt"))?;
    let points3d = parse_points3d_text(&dir.join("points3D.txt"))?;
    SparseModel { cameras, images, points3d }.finalize()
}

fn text_err(path: &Path, line: usize, msg: impl Into<String>) -> ColmapError {
    ColmapError::Parse { file: path.display().to_string(), line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    token: &str,
    what: &str,
) -> Result<T, ColmapError> {
    token.parse().map_err(|_| text_err(path, line, format!("invalid {what}: {token:?}")))
}

/// Non-comment lines with their 1-based line numbers. Blank lines are kept
/// (the images grammar needs them).
fn data_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
}

fn parse_cameras_text(path: &Path) -> Result<Vec<CameraIntrinsics>, ColmapError> {
    let content = std::fs::read_to_string(path)?;
    let mut cameras = Vec::new();
    for (lineno, line) in data_lines(&content) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 4 {
            return Err(text_err(path, lineno, "expected CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]"));
        }
        let camera_id: u32 = parse_num(path, lineno, tokens[0], "camera id")?;
        let model = CameraModel::from_name(tokens[1]).ok_or_else(|| {
            ColmapError::UnsupportedModel { file: path.display().to_string(), model: tokens[1].into() }
        })?;
        let width: u64 = parse_num(path, lineno, tokens[2], "width")?;
        let height: u64 = parse_num(path, lineno, tokens[3], "height")?;
        let params = tokens[4..]
            .iter()
            .map(|t| parse_num(path, lineno, t, "camera parameter"))
            .collect::<Result<Vec<f64>, _>>()?;
        let cam = CameraIntrinsics::from_params(camera_id, model, width, height, &params)
            .map_err(|msg| text_err(path, lineno, msg))?;
        cameras.push(cam);
    }
    Ok(cameras)
}

fn parse_images_text(path: &Path) -> Result<Vec<ImagePose>, ColmapError> {
    let content = std::fs::read_to_string(path)?;
    let mut images = Vec::new();
    let mut lines = data_lines(&content);
    while let Some((lineno, line)) = lines.next() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue; // blank separators between records are tolerated
        }
        if tokens.len() != 10 {
            return Err(text_err(
                path,
                lineno,
                format!(
                    "expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME (10 fields), got {}",
                    tokens.len()
                ),
            ));
        }
        let image_id: u32 = parse_num(path, lineno, tokens[0], "image id")?;
        let mut nums = [0.0; 7];
        for (i, n) in nums.iter_mut().enumerate() {
            *n = parse_num(path, lineno, tokens[1 + i], "pose value")?;
        }
        let camera_id: u32 = parse_num(path, lineno, tokens[8], "camera id")?;
        let name = tokens[9].to_string();

        // The next line holds the image's 2D observations — possibly
        // empty, but it must exist and be well-formed (X Y POINT3D_ID
        // triplets). The observations themselves are not retained.
        let (obs_lineno, obs_line) = lines
            .next()
            .ok_or_else(|| text_err(path, lineno, format!("image {image_id}: missing 2D point line")))?;
        let obs_tokens = obs_line.split_whitespace().count();
        if obs_tokens % 3 != 0 {
            return Err(text_err(
                path,
                obs_lineno,
                format!("2D point line has {obs_tokens} tokens, not a multiple of 3"),
            ));
        }

        images.push(ImagePose {
            image_id,
            quat: [nums[0], nums[1], nums[2], nums[3]],
            trans: [nums[4], nums[5], nums[6]],
            camera_id,
            name,
        });
    }
    Ok(images)
}

fn parse_points3d_text(path: &Path) -> Result<Vec<Point3D>, ColmapError> {
    let content = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (lineno, line) in data_lines(&content) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 8 || (tokens.len() - 8) % 2 != 0 {
            return Err(text_err(
                path,
                lineno,
                "expected POINT3D_ID X Y Z R G B ERROR (IMAGE_ID POINT2D_IDX)*",
            ));
        }
        let point3d_id: u64 = parse_num(path, lineno, tokens[0], "point id")?;
        let x: f64 = parse_num(path, lineno, tokens[1], "coordinate")?;
        let y: f64 = parse_num(path, lineno, tokens[2], "coordinate")?;
        let z: f64 = parse_num(path, lineno, tokens[3], "coordinate")?;
        let r: u8 = parse_num(path, lineno, tokens[4], "color")?;
        let g: u8 = parse_num(path, lineno, tokens[5], "color")?;
        let b: u8 = parse_num(path, lineno, tokens[6], "color")?;
        let error: f64 = parse_num(path, lineno, tokens[7], "reprojection error")?;
        let mut track = Vec::with_capacity((tokens.len() - 8) / 2);
        for pair in tokens[8..].chunks_exact(2) {
            track.push((
                parse_num(path, lineno, pair[0], "track image id")?,
                parse_num(path, lineno, pair[1], "track point index")?,
            ));
        }
        points.push(Point3D { point3d_id, xyz: [x, y, z], rgb: [r, g, b], error, track });
    }
    Ok(points)
}

pub fn write_text_model(model: &SparseModel, dir: &Path) -> Result<(), ColmapError> {
    std::fs::create_dir_all(dir)?;
    // `{:?}` prints the shortest decimal that round-trips the exact f64,
    // so text models preserve full precision.
    let mut cameras = String::from("# CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]\n");
    for c in &model.cameras {
        write!(cameras, "{} {} {} {}", c.camera_id, c.model.name(), c.width, c.height).unwrap();
        for p in c.params() {
            write!(cameras, " {p:?}").unwrap();
        }
        cameras.push('\n');
    }
    std::fs::write(dir.join("cameras.txt"), cameras)?;

    let mut images = String::from(
        "# IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME\n#   POINTS2D[] as (X Y POINT3D_ID)\n",
    );
    for img in &model.images {
        let [qw, qx, qy, qz] = img.quat;
        let [tx, ty, tz] = img.trans;
        writeln!(
            images,
            "{} {qw:?} {qx:?} {qy:?} {qz:?} {tx:?} {ty:?} {tz:?} {} {}",
            img.image_id, img.camera_id, img.name
        )
        .unwrap();
        images.push('\n'); // no retained 2D observations
    }
    std::fs::write(dir.join("images.txt"), images)?;

    let mut points = String::from("# POINT3D_ID X Y Z R G B ERROR TRACK[] as (IMAGE_ID POINT2D_IDX)\n");
    for p in &model.points3d {
        let [x, y, z] = p.xyz;
        write!(
            points,
            "{} {x:?} {y:?} {z:?} {} {} {} {:?}",
            p.point3d_id, p.rgb[0], p.rgb[1], p.rgb[2], p.error
        )
        .unwrap();
        for &(image_id, idx) in &p.track {
            write!(points, " {image_id} {idx}").unwrap();
        }
        points.push('\n');
    }
    std::fs::write(dir.join("points3D.txt"), points)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Binary encoding
// ---------------------------------------------------------------------------

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    file: String,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8], path: &Path) -> Self {
        Self { buf, pos: 0, file: path.display().to_string() }
    }

    fn err(&self, msg: impl Into<String>) -> ColmapError {
        ColmapError::Binary { file: self.file.clone(), offset: self.pos, msg: msg.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ColmapError> {
        if self.pos + n > self.buf.len() {
            return Err(self.err(format!(
                "unexpected end of file (need {n} bytes, {} left)",
                self.buf.len() - self.pos
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32_le(&mut self) -> Result<u32, ColmapError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32_le(&mut self) -> Result<i32, ColmapError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64_le(&mut self) -> Result<u64, ColmapError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_le(&mut self) -> Result<f64, ColmapError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn byte(&mut self) -> Result<u8, ColmapError> {
        Ok(self.take(1)?[0])
    }

    fn cstring(&mut self) -> Result<String, ColmapError> {
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos] != 0 {
            self.pos += 1;
        }
        if self.pos == self.buf.len() {
            return Err(self.err("unterminated string"));
        }
        let s = std::str::from_utf8(&self.buf[start..self.pos])
            .map_err(|_| self.err("string is not valid UTF-8"))?
            .to_string();
        self.pos += 1; // consume the terminator
        Ok(s)
    }

    fn count(&mut self, what: &str) -> Result<usize, ColmapError> {
        let n = self.u64_le()?;
        // Reject counts that can't possibly fit in the remaining bytes, so
        // corrupt headers fail fast instead of attempting huge allocations.
        if n > self.buf.len() as u64 {
            return Err(self.err(format!("implausible {what} count {n}")));
        }
        Ok(n as usize)
    }
}

pub fn parse_binary_model(dir: &Path) -> Result<SparseModel, ColmapError> {
    let cameras = parse_cameras_bin(&dir.join("cameras.bin"))?;
    let images = parse_images_bin(&dir.join("images.bin"))?;
    let points3d = parse_points3d_bin(&dir.join("points3D.bin"))?;
    SparseModel { cameras, images, points3d }.finalize()
}

fn parse_cameras_bin(path: &Path) -> Result<Vec<CameraIntrinsics>, ColmapError> {
    let buf = std::fs::read(path)?;
    let mut r = ByteReader::new(&buf, path);
    let n = r.count("camera")?;
    let mut cameras = Vec::with_capacity(n);
    for _ in 0..n {
        let camera_id = r.u32_le()?;
        let model_id = r.i32_le()?;
        let model = CameraModel::from_id(model_id).ok_or_else(|| ColmapError::UnsupportedModel {
            file: r.file.clone(),
            model: model_id.to_string(),
        })?;
        let width = r.u64_le()?;
        let height = r.u64_le()?;
        let mut params = Vec::with_capacity(model.param_count());
        for _ in 0..model.param_count() {
            params.push(r.f64_le()?);
        }
        let cam = CameraIntrinsics::from_params(camera_id, model, width, height, &params)
            .map_err(|msg| r.err(msg))?;
        cameras.push(cam);
    }
    if r.pos != buf.len() {
        return Err(r.err("trailing bytes after last camera"));
    }
    Ok(cameras)
}

fn parse_images_bin(path: &Path) -> Result<Vec<ImagePose>, ColmapError> {
    let buf = std::fs::read(path)?;
    let mut r = ByteReader::new(&buf, path);
    let n = r.count("image")?;
    let mut images = Vec::with_capacity(n);
    for _ in 0..n {
        let image_id = r.u32_le()?;
        let mut pose = [0.0; 7];
        for v in &mut pose {
            *v = r.f64_le()?;
        }
        let camera_id = r.u32_le()?;
        let name = r.cstring()?;
        let n_points2d = r.count("2D point")?;
        r.take(n_points2d * 24)?; // f64 x, f64 y, u64 point3d_id — not retained
        images.push(ImagePose {
            image_id,
            quat: [pose[0], pose[1], pose[2], pose[3]],
            trans: [pose[4], pose[5], pose[6]],
            camera_id,
            name,
        });
    }
    if r.pos != buf.len() {
        return Err(r.err("trailing bytes after last image"));
    }
    Ok(images)
}

fn parse_points3d_bin(path: &Path) -> Result<Vec<Point3D>, ColmapError> {
    let buf = std::fs::read(path)?;
    let mut r = ByteReader::new(&buf, path);
    let n = r.count("point")?;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let point3d_id = r.u64_le()?;
        let xyz = [r.f64_le()?, r.f64_le()?, r.f64_le()?];
        let rgb = [r.byte()?, r.byte()?, r.byte()?];
        let error = r.f64_le()?;
        let track_len = r.count("track entry")?;
        let mut track = Vec::with_capacity(track_len);
        for _ in 0..track_len {
            track.push((r.u32_le()?, r.u32_le()?));
        }
        points.push(Point3D { point3d_id, xyz, rgb, error, track });
    }
    if r.pos != buf.len() {
        return Err(r.err("trailing bytes after last point"));
    }
    Ok(points)
}

pub fn write_binary_model(model: &SparseModel, dir: &Path) -> Result<(), ColmapError> {
    std::fs::create_dir_all(dir)?;

    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(&(model.cameras.len() as u64).to_le_bytes());
    for c in &model.cameras {
        buf.extend_from_slice(&c.camera_id.to_le_bytes());
        buf.extend_from_slice(&c.model.id().to_le_bytes());
        buf.extend_from_slice(&c.width.to_le_bytes());
        buf.extend_from_slice(&c.height.to_le_bytes());
        for p in c.params() {
            buf.extend_from_slice(&p.to_le_bytes());
        }
    }
    std::fs::write(dir.join("cameras.bin"), &buf)?;

    buf = Vec::new();
    buf.extend_from_slice(&(model.images.len() as u64).to_le_bytes());
    for img in &model.images {
        buf.extend_from_slice(&img.image_id.to_le_bytes());
        for v in img.quat.iter().chain(&img.trans) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&img.camera_id.to_le_bytes());
        buf.extend_from_slice(img.name.as_bytes());
        buf.push(0);
        buf.extend_from_slice(&0u64.to_le_bytes()); // no retained 2D observations
    }
    std::fs::write(dir.join("images.bin"), &buf)?;

    buf = Vec::new();
    buf.extend_from_slice(&(model.points3d.len() as u64).to_le_bytes());
    for p in &model.points3d {
        buf.extend_from_slice(&p.point3d_id.to_le_bytes());
        for v in &p.xyz {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&p.rgb);
        buf.extend_from_slice(&p.error.to_le_bytes());
        buf.extend_from_slice(&(p.track.len() as u64).to_le_bytes());
        for &(image_id, idx) in &p.track {
            buf.extend_from_slice(&image_id.to_le_bytes());
            buf.extend_from_slice(&idx.to_le_bytes());
        }
    }
    std::fs::write(dir.join("points3D.bin"), &buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model() -> SparseModel {
        SparseModel {
            cameras: vec![CameraIntrinsics {
                camera_id: 1,
                model: CameraModel::SimpleRadial,
                width: 640,
                height: 480,
                fx: 500.25,
                fy: 500.25,
                cx: 320.0,
                cy: 240.5,
                distortion: vec![-0.031],
            }],
            images: vec![ImagePose {
                image_id: 1,
                quat: [1.0, 0.0, 0.0, 0.0],
                trans: [0.5, -0.25, 2.0],
                camera_id: 1,
                name: "A_000001.png".into(),
            }],
            points3d: vec![Point3D {
                point3d_id: 7,
                xyz: [0.1, 0.2, 0.3],
                rgb: [10, 20, 30],
                error: 0.5,
                track: vec![(1, 0)],
            }],
        }
        .finalize()
        .unwrap()
    }

    #[test]
    fn text_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let model = tiny_model();
        write_text_model(&model, dir.path()).unwrap();
        let back = parse_text_model(dir.path()).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn binary_roundtrip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let model = tiny_model();
        write_binary_model(&model, dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("images.bin")).unwrap();
        let back = parse_binary_model(dir.path()).unwrap();
        assert_eq!(model, back);
        let dir2 = tempfile::tempdir().unwrap();
        write_binary_model(&back, dir2.path()).unwrap();
        let second = std::fs::read(dir2.path().join("images.bin")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn auto_detect_prefers_binary() {
        let dir = tempfile::tempdir().unwrap();
        let model = tiny_model();
        write_text_model(&model, dir.path()).unwrap();
        write_binary_model(&model, dir.path()).unwrap();
        assert_eq!(parse_model_dir(dir.path()).unwrap(), model);
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(parse_model_dir(empty.path()), Err(ColmapError::NoModel(_))));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("cameras.txt"),
            "# header\n\n1 PINHOLE 100 100 50.0 50.0 50.0 50.0\n# trailing\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("images.txt"),
            "# header\n1 1.0 0.0 0.0 0.0 0.0 0.0 0.0 1 a.png\n1.5 2.5 -1 3.5 4.5 7\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("points3D.txt"), "# empty\n").unwrap();
        let model = parse_text_model(dir.path()).unwrap();
        assert_eq!(model.cameras.len(), 1);
        assert_eq!(model.images.len(), 1);
        assert!(model.points3d.is_empty());
    }

    #[test]
    fn malformed_text_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cameras.txt"), "# c\n1 PINHOLE 100 abc 1 1 1 1\n").unwrap();
        std::fs::write(dir.path().join("images.txt"), "").unwrap();
        std::fs::write(dir.path().join("points3D.txt"), "").unwrap();
        match parse_text_model(dir.path()) {
            Err(ColmapError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_observation_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cameras.txt"), "1 PINHOLE 10 10 5 5 5 5\n").unwrap();
        std::fs::write(dir.path().join("images.txt"), "1 1 0 0 0 0 0 0 1 a.png\n").unwrap();
        std::fs::write(dir.path().join("points3D.txt"), "").unwrap();
        assert!(matches!(parse_text_model(dir.path()), Err(ColmapError::Parse { .. })));
    }

    #[test]
    fn unsupported_model_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cameras.txt"), "1 RADIAL 10 10 5 5 5 0.1\n").unwrap();
        std::fs::write(dir.path().join("images.txt"), "").unwrap();
        std::fs::write(dir.path().join("points3D.txt"), "").unwrap();
        assert!(matches!(parse_text_model(dir.path()), Err(ColmapError::UnsupportedModel { .. })));
    }

    #[test]
    fn dangling_references_are_rejected() {
        let model = SparseModel {
            cameras: vec![],
            images: vec![ImagePose {
                image_id: 1,
                quat: [1.0, 0.0, 0.0, 0.0],
                trans: [0.0; 3],
                camera_id: 9,
                name: "x.png".into(),
            }],
            points3d: vec![],
        };
        assert!(matches!(model.finalize(), Err(ColmapError::Integrity(_))));

        let model = SparseModel {
            cameras: vec![],
            images: vec![],
            points3d: vec![Point3D {
                point3d_id: 1,
                xyz: [0.0; 3],
                rgb: [0; 3],
                error: 0.0,
                track: vec![(5, 0)],
            }],
        };
        assert!(matches!(model.finalize(), Err(ColmapError::Integrity(_))));
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let model = tiny_model();
        write_binary_model(&model, dir.path()).unwrap();
        let path = dir.path().join("images.bin");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(parse_binary_model(dir.path()), Err(ColmapError::Binary { .. })));
    }

    #[test]
    fn non_unit_quaternion_is_rejected() {
        let mut model = tiny_model();
        model.images[0].quat = [1.0, 0.1, 0.0, 0.0];
        assert!(matches!(model.finalize(), Err(ColmapError::Integrity(_))));
    }
}
