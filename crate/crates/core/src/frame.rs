//! Frame identity and pixel storage shared by every pipeline stage.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Stable identity of a frame across the whole pipeline run.
///
/// Ordering is `(camera_id, video_id, index)`: the string components compare
/// lexicographically and the index numerically, which makes the order total
/// and reproducible regardless of filesystem enumeration order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameId {
    pub camera_id: String,
    pub video_id: String,
    pub index: u32,
}

impl FrameId {
    pub fn new(camera_id: impl Into<String>, video_id: impl Into<String>, index: u32) -> Self {
        Self { camera_id: camera_id.into(), video_id: video_id.into(), index }
    }

    /// Canonical, path-safe file stem for emitting this frame to disk.
    ///
    /// The index is zero-padded so lexicographic filename order matches
    /// numeric frame order. Path separators inside ids are flattened.
    pub fn file_stem(&self) -> String {
        let clean = |s: &str| s.replace(['/', '\\'], "-");
        if self.video_id.is_empty() {
            format!("{}_{:06}", clean(&self.camera_id), self.index)
        } else {
            format!("{}_{}_{:06}", clean(&self.camera_id), clean(&self.video_id), self.index)
        }
    }
}

impl fmt::Display for FrameId {
    /// `camera:video:index` — the form used by exclusion-list patterns.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.camera_id, self.video_id, self.index)
    }
}

/// A decoded frame: identity plus an owned 8-bit RGB plane.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: FrameId,
    pub width: u32,
    pub height: u32,
    /// Row-major RGB triples, `3 * width * height` bytes.
    pub rgb: Vec<u8>,
    /// Where the pixels came from, for diagnostics and manifests.
    pub source_path: PathBuf,
}

/// Frames are shared between stages without copying pixel planes.
pub type FrameRef = Arc<Frame>;

impl Frame {
    pub fn new(id: FrameId, width: u32, height: u32, rgb: Vec<u8>, source_path: PathBuf) -> Self {
        assert_eq!(rgb.len(), 3 * width as usize * height as usize, "RGB plane size mismatch");
        Self { id, width, height, rgb, source_path }
    }

    /// Grayscale conversion shared by every luminance consumer (sharpness
    /// scoring, hashing, SSIM): ITU-R BT.601 weights, rounded half-up.
    pub fn luma_plane(&self) -> GrayPlane {
        let n = self.width as usize * self.height as usize;
        let mut data = Vec::with_capacity(n);
        for px in self.rgb.chunks_exact(3) {
            data.push(luma_u8(px[0], px[1], px[2]) as f64);
        }
        GrayPlane { width: self.width as usize, height: self.height as usize, data }
    }
}

/// `0.299 R + 0.587 G + 0.114 B`, rounded half-up to an 8-bit value.
pub fn luma_u8(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    (y + 0.5).floor().min(255.0) as u8
}

/// A grayscale plane in `f64`, values in `[0, 255]`, row-major.
#[derive(Debug, Clone)]
pub struct GrayPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayPlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane size mismatch");
        Self { width, height, data }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Which stage produced a frame set. Stages check this instead of trusting
/// call order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Raw,
    Sampled,
    Deblurred,
    Deduped,
}

/// An ordered set of frames with provenance.
///
/// Invariants: frame ids are strictly increasing (hence unique), and every
/// stage preserves relative order of the frames it keeps.
#[derive(Debug, Clone)]
pub struct FrameSet {
    frames: Vec<FrameRef>,
    provenance: Provenance,
}

#[derive(Debug, thiserror::Error)]
pub enum FrameSetError {
    #[error("frame ids not strictly increasing at position {position}: {id}")]
    OutOfOrder { position: usize, id: FrameId },
}

impl FrameSet {
    /// Builds a set, enforcing the strictly-increasing id invariant.
    pub fn new(frames: Vec<FrameRef>, provenance: Provenance) -> Result<Self, FrameSetError> {
        for (i, pair) in frames.windows(2).enumerate() {
            if pair[0].id >= pair[1].id {
                return Err(FrameSetError::OutOfOrder { position: i + 1, id: pair[1].id.clone() });
            }
        }
        Ok(Self { frames, provenance })
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[FrameRef] {
        &self.frames
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FrameRef> {
        self.frames.iter()
    }

    /// Keeps frames matching the predicate; order is preserved and the
    /// result is tagged with the given provenance.
    pub fn retain(&self, provenance: Provenance, mut keep: impl FnMut(&Frame) -> bool) -> FrameSet {
        let frames = self.frames.iter().filter(|f| keep(f)).cloned().collect();
        FrameSet { frames, provenance }
    }

    /// Replaces frames one-for-one (same ids, same order), retagging
    /// provenance. Used by per-frame transforms such as rotation.
    pub fn map(&self, provenance: Provenance, mut f: impl FnMut(&FrameRef) -> FrameRef) -> FrameSet {
        let frames = self.frames.iter().map(|fr| f(fr)).collect();
        FrameSet { frames, provenance }
    }
}

impl<'a> IntoIterator for &'a FrameSet {
    type Item = &'a FrameRef;
    type IntoIter = std::slice::Iter<'a, FrameRef>;
    fn into_iter(self) -> Self::IntoIter {
        self.frames.iter()
    }
}

/// Per-camera orientation correction.
///
/// Rigs that mount cameras upside down need a half-turn before any
/// photometric processing; anything else is a no-op.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rotation {
    None,
    HalfTurn,
}

/// Maps camera ids to rotation flags; cameras not present rotate `None`.
///
/// Serialized (config files and manifests alike) as the sorted list of
/// camera ids flagged for a half-turn, e.g. `["B", "C"]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RotationMap(std::collections::BTreeMap<String, Rotation>);

impl RotationMap {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a map flagging the listed cameras for a half-turn.
    pub fn half_turn_for(cameras: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self(cameras.into_iter().map(|c| (c.into(), Rotation::HalfTurn)).collect())
    }

    pub fn rotation_for(&self, camera_id: &str) -> Rotation {
        self.0.get(camera_id).copied().unwrap_or(Rotation::None)
    }

    pub fn is_empty(&self) -> bool {
        self.0.values().all(|r| *r == Rotation::None)
    }

    /// Camera ids flagged for a half-turn, in sorted order.
    pub fn half_turn_cameras(&self) -> Vec<&str> {
        self.0
            .iter()
            .filter(|(_, r)| **r == Rotation::HalfTurn)
            .map(|(c, _)| c.as_str())
            .collect()
    }
}

impl Serialize for RotationMap {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        self.half_turn_cameras().serialize(ser)
    }
}

impl<'de> Deserialize<'de> for RotationMap {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        Ok(Self::half_turn_for(Vec::<String>::deserialize(de)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(cam: &str, idx: u32) -> FrameRef {
        Arc::new(Frame::new(FrameId::new(cam, "", idx), 2, 1, vec![0; 6], PathBuf::new()))
    }

    #[test]
    fn frame_id_order_is_camera_video_index() {
        let a = FrameId::new("A", "", 10);
        let b = FrameId::new("A", "", 2);
        let c = FrameId::new("B", "", 0);
        let d = FrameId::new("A", "v1", 0);
        assert!(b < a, "index compares numerically");
        assert!(a < c, "camera compares first");
        assert!(a < d, "video compares before index");
    }

    #[test]
    fn frame_set_rejects_duplicates_and_disorder() {
        let err = FrameSet::new(vec![frame("A", 1), frame("A", 1)], Provenance::Raw);
        assert!(err.is_err());
        let err = FrameSet::new(vec![frame("A", 2), frame("A", 1)], Provenance::Raw);
        assert!(err.is_err());
        let ok = FrameSet::new(vec![frame("A", 1), frame("A", 2)], Provenance::Raw);
        assert!(ok.is_ok());
    }

    #[test]
    fn luma_weights_and_rounding() {
        assert_eq!(luma_u8(255, 255, 255), 255);
        assert_eq!(luma_u8(0, 0, 0), 0);
        // 0.299*100 = 29.9 -> 30 (half-up)
        assert_eq!(luma_u8(100, 0, 0), 30);
        // 0.587*100 = 58.7 -> 59
        assert_eq!(luma_u8(0, 100, 0), 59);
        // 0.114*100 = 11.4 -> 11
        assert_eq!(luma_u8(0, 0, 100), 11);
        // 0.299*1 + 0.587*1 + 0.114*1 = 1.0 exactly
        assert_eq!(luma_u8(1, 1, 1), 1);
    }

    #[test]
    fn display_and_stem() {
        let id = FrameId::new("A", "scan1", 7);
        assert_eq!(id.to_string(), "A:scan1:7");
        assert_eq!(id.file_stem(), "A_scan1_000007");
        let id = FrameId::new("cam/2", "", 7);
        assert_eq!(id.file_stem(), "cam-2_000007");
    }
}
